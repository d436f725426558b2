//! Weakness catalog used to annotate scenario results.
//!
//! Rows pair a CWE with the attack scenario that exercises it and the ALG,
//! proxy and firewall products where it has been observed.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CweEntry {
    pub cwe_id: &'static str,
    pub description: &'static str,
    pub attack_scenario: &'static str,
    pub occurred_in: &'static [&'static str],
    /// A harness scenario exercises this weakness.
    pub implemented: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CweError {
    #[error("{0} is not in the catalog")]
    NotFound(String),
}

const fn row(
    cwe_id: &'static str,
    description: &'static str,
    attack_scenario: &'static str,
    occurred_in: &'static [&'static str],
    implemented: bool,
) -> CweEntry {
    CweEntry {
        cwe_id,
        description,
        attack_scenario,
        occurred_in,
        implemented,
        note: None,
    }
}

const ASA_FTD: &[&str] = &["Cisco ASA", "Cisco FTD"];
const HAPROXY: &[&str] = &["HAProxy"];
const HAPROXY_PFSENSE: &[&str] = &["HAProxy", "Pfsense"];
const PFSENSE: &[&str] = &["Pfsense"];
const IOS: &[&str] = &["Cisco IOS"];
const JUNOS: &[&str] = &["Junos OS"];
const F5: &[&str] = &["F5 BIP-IP AFM"];

pub static CATALOG: &[CweEntry] = &[
    row("CWE-20", "Improper Input Validation", "Crafted DNS, RTSP packets", ASA_FTD, true),
    row("CWE-22", "Improper Limitation of a Pathname to a Restricted Directory", "Crafted HTTP requests", HAPROXY_PFSENSE, false),
    row("CWE-74", "Improper Neutralization of characters ('Injection')", "Encapsulation attack (via HTTP req)", HAPROXY, false),
    row("CWE-78", "Improper Neutralization of characters ('OS Command Injection')", "OS command injection (via HTTP req)", HAPROXY_PFSENSE, false),
    row("CWE-79", "Improper Neutralization of characters ('Cross-site Scripting')", "Crafted HTTP requests", PFSENSE, false),
    row("CWE-91", "XML Injection (aka Blind XPath Injection)", "Manipulation of configuration XML files", PFSENSE, false),
    row("CWE-120", "Buffer Copy without Checking Size of Input ('Buffer Overflow')", "Specific FTP transfer", IOS, false),
    row("CWE-190", "Integer Overflow or Wraparound", "HTTP Request Smuggling", HAPROXY, false),
    row("CWE-200", "Exposure of Sensitive Information to an Unauthorized Actor", "Log Data Extraction", HAPROXY, false),
    row("CWE-281", "Improper Preservation of Permissions", "Crafted FTP commands", PFSENSE, true),
    row("CWE-290", "Authentication Bypass by Spoofing", "IP and MAC spoofing", &["PfSense"], true),
    row("CWE-307", "Improper Restriction of Excessive Authentication Attempts", "Brute Force to Authentication", PFSENSE, false),
    row("CWE-358", "Improperly Implemented Security Check for Standard", "NAT Slipstreaming", ASA_FTD, false),
    row("CWE-399", "Resource Management Errors", "Crafted SIP, H.323 packets", IOS, false),
    row("CWE-400", "Uncontrolled Resource Consumption", "Resource Exhaustion Attacks", F5, true),
    row("CWE-401", "Missing Release of Memory after Effective Lifetime", "Crafted SIP packets", JUNOS, false),
    row("CWE-434", "Unrestricted Upload of Dangerous File", "Specific FTP transfer", IOS, true),
    row("CWE-444", "Inconsistent Interpretation of HTTP Requests", "HTTP Request/Response Smuggling", HAPROXY, true),
    row("CWE-459", "Incomplete Cleanup", "Crafted HTTP requests", HAPROXY, false),
    row("CWE-665", "Improper Initialization", "Crafted SIP packets", IOS, false),
    row("CWE-693", "Protection Mechanism Failure", "Crafted H.323 packet", IOS, false),
    row("CWE-754", "Improper Check for Unusual or Exceptional Conditions", "Crafted DNS packets", IOS, false),
    row("CWE-755", "Improper Handling of Exceptional Conditions", "Crafted HTTP request", HAPROXY, false),
    row("CWE-787", "Out-of-bounds Write", "Crafted HTTP requests", HAPROXY, false),
    row("CWE-824", "Access of Uninitialized Pointer", "Crafted SIP packets", JUNOS, false),
    row("CWE-835", "Loop with Unreachable Exit Condition ('Infinite Loop')", "Crafted HTTP responses", HAPROXY, false),
    row("CWE-908", "Use of Uninitialized Resource", "Resource Exhaustion Attacks", F5, false),
    CweEntry {
        cwe_id: "CWE-1333",
        description: "Inefficient Regular Expression Complexity",
        attack_scenario: "Crafted HTTP requests",
        occurred_in: &[],
        implemented: true,
        note: Some("tested weakness without an observed-product row"),
    },
];

pub fn lookup(cwe_id: &str) -> Result<&'static CweEntry, CweError> {
    CATALOG
        .iter()
        .find(|e| e.cwe_id == cwe_id)
        .ok_or_else(|| CweError::NotFound(cwe_id.to_string()))
}
