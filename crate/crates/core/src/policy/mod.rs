//! The ALG's policy catalog and its network-layer decision procedure.
//!
//! A [`PolicySet`] is loaded once from JSON, validated, and then shared
//! read-only. Mutable enforcement state (the token bucket) lives with the
//! network that owns it.

mod arp;
mod bucket;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{from_json, ConfigError};
use crate::packet::{FileKind, Frame, IpAddr, IpProto, Ipv4Packet, MacAddr, Transport};
use crate::pattern::{self, Engine, Pattern};
use crate::time::VirtualTime;

pub use arp::{handle_arp, ArpEvent, ArpOutcome, ArpTable};
pub use bucket::{bandwidth_admit, TokenBucket};

pub const SCHEMA_VERSION: u32 = 1;

/// Coarse traffic class used by protocol allow-lists and connection rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolClass {
    Icmp,
    Http,
    Ftp,
    Tcp,
    Udp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connection {
    pub a: IpAddr,
    pub b: IpAddr,
    pub protocols: BTreeSet<ProtocolClass>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Isolation {
    pub default_deny: bool,
    #[serde(default)]
    pub allowed_connections: Vec<Connection>,
}

impl Isolation {
    /// Connections are symmetric: a rule for (a, b) also covers (b, a).
    pub fn allows(&self, src: IpAddr, dst: IpAddr, class: ProtocolClass) -> bool {
        !self.default_deny
            || self.allowed_connections.iter().any(|c| {
                ((c.a == src && c.b == dst) || (c.a == dst && c.b == src))
                    && c.protocols.contains(&class)
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleAction {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortRule {
    pub proto: IpProto,
    /// `None` matches every port of `proto`.
    #[serde(default)]
    pub dst_port: Option<u16>,
    pub action: RuleAction,
}

impl PortRule {
    fn matches(&self, transport: &Transport) -> bool {
        transport.ip_proto() == self.proto
            && match (self.dst_port, transport.ports()) {
                (None, _) => true,
                (Some(p), Some((_, dst))) => p == dst,
                (Some(_), None) => false,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentRoute {
    pub ingress_port: u16,
    pub allowed_src_ip: IpAddr,
    pub required_kind: FileKind,
    pub dest_ip: IpAddr,
    pub dest_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderMode {
    /// Reject ambiguous framing outright.
    Strict,
    /// Trust the last occurrence of a duplicated header.
    LastWins,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum SpoofAuth {
    /// Identity is whatever the source address fields claim.
    AddressOnly,
    /// Each host must attach its shared secret.
    Token { tokens: BTreeMap<IpAddr, String> },
}

impl SpoofAuth {
    pub fn token_for(&self, ip: IpAddr) -> Option<&str> {
        match self {
            SpoofAuth::AddressOnly => None,
            SpoofAuth::Token { tokens } => tokens.get(&ip).map(String::as_str),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bandwidth {
    /// Frames per virtual second.
    pub rate_per_sec: f64,
    pub burst: f64,
    /// Classes the limit applies to; all traffic when absent.
    #[serde(default)]
    pub applies_to: Option<BTreeSet<ProtocolClass>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanRuleDoc {
    pattern: String,
    engine: Engine,
    step_limit: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
enum FtpScanDoc {
    #[default]
    Off,
    On {
        pattern: String,
        engine: Engine,
        step_limit: u64,
    },
}

/// A compiled pattern plus the engine and step limit it runs under. For the
/// backtracking engine the limit is a watchdog, not a design bound.
#[derive(Debug, Clone)]
pub struct ScanRule {
    pub pattern: Pattern,
    pub engine: Engine,
    pub step_limit: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOutcome {
    Clean,
    Matched,
    BudgetExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scan {
    pub outcome: ScanOutcome,
    pub steps: u64,
}

impl ScanRule {
    pub fn scan(&self, input: &[u8]) -> Scan {
        match pattern::run(self.engine, &self.pattern, input, self.step_limit) {
            Ok(r) => Scan {
                outcome: if r.matched {
                    ScanOutcome::Matched
                } else {
                    ScanOutcome::Clean
                },
                steps: r.steps,
            },
            Err(_) => Scan {
                outcome: ScanOutcome::BudgetExceeded,
                steps: self.step_limit,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum FtpScan {
    Off,
    On(ScanRule),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    schema_version: u32,
    isolation: Isolation,
    ip_whitelist: BTreeSet<IpAddr>,
    mac_whitelist: BTreeSet<MacAddr>,
    #[serde(default)]
    static_arp: BTreeMap<IpAddr, MacAddr>,
    allowed_protocols: BTreeSet<ProtocolClass>,
    #[serde(default)]
    port_rules: Vec<PortRule>,
    #[serde(default)]
    content_routes: Vec<ContentRoute>,
    #[serde(default)]
    url_blocklist: Vec<String>,
    #[serde(default = "default_url_budget")]
    url_filter_budget: u64,
    #[serde(default)]
    author_whitelist: BTreeSet<String>,
    #[serde(default = "default_ftp_ports")]
    ftp_ports: BTreeSet<u16>,
    #[serde(default)]
    ftp_blocked_verbs: Vec<String>,
    #[serde(default)]
    ftp_command_pattern: Option<ScanRuleDoc>,
    #[serde(default)]
    ftp_scan: FtpScanDoc,
    header_mode: HeaderMode,
    spoof_auth: SpoofAuth,
    #[serde(default)]
    bandwidth: Option<Bandwidth>,
    max_acceptable_latency_ms: f64,
    capacity_rpm: f64,
}

fn default_url_budget() -> u64 {
    100_000
}

fn default_ftp_ports() -> BTreeSet<u16> {
    BTreeSet::from([21])
}

/// Validated, immutable policy catalog.
#[derive(Debug, Clone)]
pub struct PolicySet {
    pub isolation: Isolation,
    pub ip_whitelist: BTreeSet<IpAddr>,
    pub mac_whitelist: BTreeSet<MacAddr>,
    pub static_arp: BTreeMap<IpAddr, MacAddr>,
    pub allowed_protocols: BTreeSet<ProtocolClass>,
    pub port_rules: Vec<PortRule>,
    pub content_routes: Vec<ContentRoute>,
    /// Matched with the budgeted engine under `url_filter_budget`.
    pub url_blocklist: Vec<Pattern>,
    pub url_filter_budget: u64,
    pub author_whitelist: BTreeSet<String>,
    pub ftp_ports: BTreeSet<u16>,
    pub ftp_blocked_verbs: BTreeSet<String>,
    /// Malicious-pattern check over FTP command arguments.
    pub ftp_command_pattern: Option<ScanRule>,
    /// Malicious-pattern scan over data attached to transfer commands.
    pub ftp_scan: FtpScan,
    pub header_mode: HeaderMode,
    pub spoof_auth: SpoofAuth,
    pub bandwidth: Option<Bandwidth>,
    pub max_acceptable_latency_ms: f64,
    pub capacity_rpm: f64,
}

fn compile_rule(doc: ScanRuleDoc, pointer: &str) -> Result<ScanRule, ConfigError> {
    let pattern = pattern::compile(&doc.pattern)
        .map_err(|e| ConfigError::at(format!("{pointer}/pattern"), e.to_string()))?;
    if doc.step_limit == 0 {
        return Err(ConfigError::at(
            format!("{pointer}/step_limit"),
            "step_limit must be positive",
        ));
    }
    Ok(ScanRule {
        pattern,
        engine: doc.engine,
        step_limit: doc.step_limit,
    })
}

pub fn load_policy(json: &[u8]) -> Result<PolicySet, ConfigError> {
    let doc: PolicyDoc = from_json(json)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::at(
            "/schema_version",
            format!("unsupported schema version {}", doc.schema_version),
        ));
    }

    let mut ports = BTreeSet::new();
    for (i, route) in doc.content_routes.iter().enumerate() {
        if !ports.insert(route.ingress_port) {
            return Err(ConfigError::at(
                format!("/content_routes/{i}/ingress_port"),
                format!("port {} is already bound to another route", route.ingress_port),
            ));
        }
        if doc.ftp_ports.contains(&route.ingress_port) {
            return Err(ConfigError::at(
                format!("/content_routes/{i}/ingress_port"),
                format!("port {} is also an FTP port", route.ingress_port),
            ));
        }
        if route.required_kind == FileKind::Unknown {
            return Err(ConfigError::at(
                format!("/content_routes/{i}/required_kind"),
                "a route must require doc or mpeg",
            ));
        }
    }

    let url_blocklist = doc
        .url_blocklist
        .iter()
        .enumerate()
        .map(|(i, src)| {
            pattern::compile(src)
                .map_err(|e| ConfigError::at(format!("/url_blocklist/{i}"), e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if doc.url_filter_budget == 0 {
        return Err(ConfigError::at("/url_filter_budget", "budget must be positive"));
    }

    let mut ftp_blocked_verbs = BTreeSet::new();
    for (i, verb) in doc.ftp_blocked_verbs.iter().enumerate() {
        if verb.is_empty() || !verb.bytes().all(|b| b.is_ascii_alphabetic()) {
            return Err(ConfigError::at(
                format!("/ftp_blocked_verbs/{i}"),
                "verbs are ASCII letters only",
            ));
        }
        ftp_blocked_verbs.insert(verb.to_ascii_uppercase());
    }

    let ftp_command_pattern = doc
        .ftp_command_pattern
        .map(|r| compile_rule(r, "/ftp_command_pattern"))
        .transpose()?;
    let ftp_scan = match doc.ftp_scan {
        FtpScanDoc::Off => FtpScan::Off,
        FtpScanDoc::On {
            pattern,
            engine,
            step_limit,
        } => FtpScan::On(compile_rule(
            ScanRuleDoc {
                pattern,
                engine,
                step_limit,
            },
            "/ftp_scan",
        )?),
    };

    if let Some(bw) = &doc.bandwidth {
        if !(bw.rate_per_sec.is_finite() && bw.rate_per_sec > 0.0) {
            return Err(ConfigError::at("/bandwidth/rate_per_sec", "rate must be positive"));
        }
        if !(bw.burst.is_finite() && bw.burst >= 1.0) {
            return Err(ConfigError::at("/bandwidth/burst", "burst must be at least 1"));
        }
    }
    if !(doc.max_acceptable_latency_ms.is_finite() && doc.max_acceptable_latency_ms >= 0.0) {
        return Err(ConfigError::at(
            "/max_acceptable_latency_ms",
            "latency bound must be non-negative",
        ));
    }
    if !(doc.capacity_rpm.is_finite() && doc.capacity_rpm > 0.0) {
        return Err(ConfigError::at("/capacity_rpm", "capacity must be positive"));
    }

    Ok(PolicySet {
        isolation: doc.isolation,
        ip_whitelist: doc.ip_whitelist,
        mac_whitelist: doc.mac_whitelist,
        static_arp: doc.static_arp,
        allowed_protocols: doc.allowed_protocols,
        port_rules: doc.port_rules,
        content_routes: doc.content_routes,
        url_blocklist,
        url_filter_budget: doc.url_filter_budget,
        author_whitelist: doc.author_whitelist,
        ftp_ports: doc.ftp_ports,
        ftp_blocked_verbs,
        ftp_command_pattern,
        ftp_scan,
        header_mode: doc.header_mode,
        spoof_auth: doc.spoof_auth,
        bandwidth: doc.bandwidth,
        max_acceptable_latency_ms: doc.max_acceptable_latency_ms,
        capacity_rpm: doc.capacity_rpm,
    })
}

impl PolicySet {
    pub fn http_ingress_ports(&self) -> impl Iterator<Item = u16> + '_ {
        self.content_routes.iter().map(|r| r.ingress_port)
    }

    fn is_http_port(&self, port: u16) -> bool {
        self.content_routes
            .iter()
            .any(|r| r.ingress_port == port || r.dest_port == port)
    }

    pub fn classify(&self, transport: &Transport) -> ProtocolClass {
        match *transport {
            Transport::Icmp { .. } => ProtocolClass::Icmp,
            Transport::Udp { .. } => ProtocolClass::Udp,
            Transport::Tcp { src_port, dst_port } => {
                if self.is_http_port(src_port) || self.is_http_port(dst_port) {
                    ProtocolClass::Http
                } else if self.ftp_ports.contains(&src_port) || self.ftp_ports.contains(&dst_port)
                {
                    ProtocolClass::Ftp
                } else {
                    ProtocolClass::Tcp
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    NotIpv4,
    IpNotWhitelisted,
    MacNotWhitelisted,
    AuthTokenMismatch,
    ProtocolNotAllowed,
    PortRule,
    RateExceeded,
    Isolation,
    NoService,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::NotIpv4 => "not-ipv4",
            DenyReason::IpNotWhitelisted => "ip-not-whitelisted",
            DenyReason::MacNotWhitelisted => "mac-not-whitelisted",
            DenyReason::AuthTokenMismatch => "auth-token-mismatch",
            DenyReason::ProtocolNotAllowed => "protocol-not-allowed",
            DenyReason::PortRule => "port-rule",
            DenyReason::RateExceeded => "rate-exceeded",
            DenyReason::Isolation => "isolation",
            DenyReason::NoService => "no-service",
        }
    }

    pub fn cwe(self) -> Option<&'static str> {
        match self {
            DenyReason::IpNotWhitelisted
            | DenyReason::MacNotWhitelisted
            | DenyReason::AuthTokenMismatch => Some("CWE-290"),
            DenyReason::ProtocolNotAllowed
            | DenyReason::PortRule
            | DenyReason::Isolation
            | DenyReason::NoService
            | DenyReason::NotIpv4 => Some("CWE-20"),
            DenyReason::RateExceeded => Some("CWE-400"),
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Inspector {
    Http,
    Ftp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny {
        reason: DenyReason,
        cwe: Option<&'static str>,
    },
    ForwardToInspector(Inspector),
}

impl Decision {
    pub fn deny(reason: DenyReason) -> Self {
        Decision::Deny {
            reason,
            cwe: reason.cwe(),
        }
    }
}

/// Network-layer decision for an IPv4 frame arriving at the ALG.
///
/// `local` is true when the destination is one of the ALG's own addresses.
/// Checks run in a fixed order so a frame that violates several rules always
/// reports the same reason: source IP whitelist, source MAC whitelist, token
/// (token mode only), protocol class, port rules (first match wins),
/// bandwidth, then dispatch. Local HTTP ports go to the HTTP inspector;
/// everything else must pass isolation, after which FTP goes to the FTP
/// inspector and the rest is allowed.
pub fn decide_l3(
    policy: &PolicySet,
    frame: &Frame,
    local: bool,
    bucket: Option<&mut TokenBucket>,
    now: VirtualTime,
) -> Decision {
    let Some(packet) = frame.as_ipv4() else {
        return Decision::deny(DenyReason::NotIpv4);
    };
    if !policy.ip_whitelist.contains(&packet.src) {
        return Decision::deny(DenyReason::IpNotWhitelisted);
    }
    if !policy.mac_whitelist.contains(&frame.src_mac) {
        return Decision::deny(DenyReason::MacNotWhitelisted);
    }
    if let SpoofAuth::Token { tokens } = &policy.spoof_auth {
        if tokens.get(&packet.src).map(String::as_str) != packet.auth_token.as_deref() {
            return Decision::deny(DenyReason::AuthTokenMismatch);
        }
    }
    let class = policy.classify(&packet.transport);
    if !policy.allowed_protocols.contains(&class) {
        return Decision::deny(DenyReason::ProtocolNotAllowed);
    }
    if let Some(rule) = policy.port_rules.iter().find(|r| r.matches(&packet.transport)) {
        if rule.action == RuleAction::Deny {
            return Decision::deny(DenyReason::PortRule);
        }
    }
    if let Some(bucket) = bucket {
        if let Decision::Deny { reason, cwe } = bandwidth_admit(policy, bucket, now, class) {
            return Decision::Deny { reason, cwe };
        }
    }
    dispatch(policy, packet, local, class)
}

fn dispatch(policy: &PolicySet, packet: &Ipv4Packet, local: bool, class: ProtocolClass) -> Decision {
    if local {
        return match packet.transport {
            Transport::Icmp { .. } => Decision::Allow,
            Transport::Tcp { dst_port, .. }
                if policy.http_ingress_ports().any(|p| p == dst_port) =>
            {
                Decision::ForwardToInspector(Inspector::Http)
            }
            _ => Decision::deny(DenyReason::NoService),
        };
    }
    if !policy.isolation.allows(packet.src, packet.dst, class) {
        return Decision::deny(DenyReason::Isolation);
    }
    if class == ProtocolClass::Ftp {
        Decision::ForwardToInspector(Inspector::Ftp)
    } else {
        Decision::Allow
    }
}

#[cfg(test)]
mod tests;
