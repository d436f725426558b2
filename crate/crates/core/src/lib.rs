//! Deterministic testbed for Application Layer Gateway (ALG) security testing.
//!
//! The crate simulates a VLAN-segmented network whose only inter-VLAN path
//! is an ALG node. The ALG enforces a policy catalog at the network layer
//! (isolation, address whitelists, protocol and port rules, rate limits,
//! static ARP) and at the application layer (HTTP normalization, content
//! routing, author whitelisting, URL filtering, FTP command filtering and
//! data scanning). An attack harness drives CWE-tagged scenarios against it
//! and reports an Enforced / Not Enforced verdict for each.
//!
//! Everything runs in virtual time, so every latency, step count and trace
//! is reproducible bit for bit.

pub mod packet;
pub mod pattern;
pub mod dpi;
pub mod policy;
pub mod time;
pub mod vnet;
pub mod harness;
pub mod cwe;
pub mod report;

mod config;

pub use config::ConfigError;
