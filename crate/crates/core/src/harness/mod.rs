//! Attack scenarios against the simulated ALG and their verdicts.
//!
//! Every scenario builds its own network, injects its traffic, runs to idle
//! and records evidence as a JSON object. The verdict is a pure function of
//! that evidence.

mod fuzz;
mod scenarios;
mod stress;

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::policy::PolicySet;
use crate::vnet::{NetworkConfig, SimError, TraceEntry};
use crate::ConfigError;

pub use fuzz::{gen_fuzz_http, mutate, mutations, FuzzRequest, HttpTemplate, Mutation, MAX_EXPANSION};
pub use scenarios::{expected_destination, REDOS_SEED_COMMAND};
pub use stress::{load_run, stress, LoadRun, StressPoint, StressReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("topology has no host {0:?}")]
    MissingHost(String),
    #[error("policy has no content route to load")]
    NoContentRoute,
    #[error("stress rates must be positive and strictly increasing")]
    InvalidSchedule,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Enforced,
    NotEnforced,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Enforced => "Enforced",
            Verdict::NotEnforced => "Not Enforced",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub id: &'static str,
    pub title: &'static str,
    pub cwe: &'static [&'static str],
    /// Policy fields the scenario exercises.
    pub policy_ref: &'static [&'static str],
    pub attack: &'static str,
}

pub static SCENARIOS: [ScenarioSpec; 13] = [
    ScenarioSpec {
        id: "S1",
        title: "VLAN isolation",
        cwe: &["CWE-20"],
        policy_ref: &["isolation"],
        attack: "ICMP echo between every pair of hosts, plus direct layer-2 frames across VLANs",
    },
    ScenarioSpec {
        id: "S2",
        title: "Source IP whitelist",
        cwe: &["CWE-290"],
        policy_ref: &["ip_whitelist", "spoof_auth"],
        attack: "packets from the spoof host carrying the source IP of a multimedia server",
    },
    ScenarioSpec {
        id: "S3",
        title: "Source MAC whitelist",
        cwe: &["CWE-290"],
        policy_ref: &["mac_whitelist", "spoof_auth"],
        attack: "packets from the spoof host carrying the source MAC of a multimedia server",
    },
    ScenarioSpec {
        id: "S4",
        title: "Static ARP bindings",
        cwe: &["CWE-290"],
        policy_ref: &["static_arp"],
        attack: "gratuitous and request ARP messages claiming a server's IP for the spoof MAC",
    },
    ScenarioSpec {
        id: "S5",
        title: "FTP command blocklist",
        cwe: &["CWE-281"],
        policy_ref: &["ftp_blocked_verbs"],
        attack: "MKD sent by the FTP client to the FTP server",
    },
    ScenarioSpec {
        id: "S6",
        title: "FTP upload content scan",
        cwe: &["CWE-434"],
        policy_ref: &["ftp_scan"],
        attack: "crafted file uploaded with CP by the FTP client",
    },
    ScenarioSpec {
        id: "S7",
        title: "MPEG content route",
        cwe: &["CWE-281"],
        policy_ref: &["content_routes"],
        attack: "generated HTTP uploads from the MPEG client with varied file types, ports and headers",
    },
    ScenarioSpec {
        id: "S8",
        title: "DOC content route",
        cwe: &["CWE-281"],
        policy_ref: &["content_routes", "author_whitelist"],
        attack: "generated HTTP uploads from the DOC client with varied file types, ports and headers",
    },
    ScenarioSpec {
        id: "S9",
        title: "Document author whitelist",
        cwe: &["CWE-281"],
        policy_ref: &["author_whitelist"],
        attack: "DOC uploads carrying random authors",
    },
    ScenarioSpec {
        id: "S10",
        title: "HTTP normalization",
        cwe: &["CWE-444"],
        policy_ref: &["header_mode"],
        attack: "request with two Content-Length headers hiding a second request in its body",
    },
    ScenarioSpec {
        id: "S11",
        title: "Regex efficiency",
        cwe: &["CWE-1333"],
        policy_ref: &["ftp_command_pattern", "max_acceptable_latency_ms"],
        attack: "mutated FTP commands with expanded character runs against the command filter",
    },
    ScenarioSpec {
        id: "S12",
        title: "Throughput under load",
        cwe: &["CWE-400"],
        policy_ref: &["capacity_rpm"],
        attack: "uniform HTTP load from a quarter of capacity up to full capacity",
    },
    ScenarioSpec {
        id: "S13",
        title: "Maximum latency",
        cwe: &["CWE-400"],
        policy_ref: &["max_acceptable_latency_ms"],
        attack: "a single well-formed HTTP upload timed through the ALG",
    },
];

pub fn scenario(id: &str) -> Result<&'static ScenarioSpec, HarnessError> {
    SCENARIOS
        .iter()
        .find(|s| s.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| HarnessError::UnknownScenario(id.to_string()))
}

/// Parses `all` or a comma-separated id list into catalog order, without
/// duplicates.
pub fn select_scenarios(list: &str) -> Result<Vec<&'static ScenarioSpec>, HarnessError> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(SCENARIOS.iter().collect());
    }
    let mut picked = Vec::new();
    for id in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let spec = scenario(id)?;
        if !picked.contains(&spec) {
            picked.push(spec);
        }
    }
    picked.sort_by_key(|s| catalog_index(s.id));
    Ok(picked)
}

fn catalog_index(id: &str) -> usize {
    SCENARIOS.iter().position(|s| s.id == id).unwrap_or(usize::MAX)
}

/// Seed for one scenario: ChaCha8 seeded from the run seed, on the stream
/// numbered by the scenario's catalog position.
pub fn scenario_seed(run_seed: u64, id: &str) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(catalog_index(id) as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub id: String,
    pub title: String,
    pub cwe: Vec<String>,
    pub policy_ref: Vec<String>,
    pub verdict: Verdict,
    pub evidence: Value,
    pub virtual_duration_ms: f64,
}

/// A result plus the material it was computed from.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub result: ScenarioResult,
    pub trace: Vec<TraceEntry>,
    pub stress: Option<StressReport>,
}

fn flag(evidence: &Value, key: &str) -> bool {
    evidence[key].as_bool().unwrap_or(false)
}

fn num(evidence: &Value, key: &str) -> f64 {
    evidence[key].as_f64().unwrap_or(f64::NAN)
}

fn empty(evidence: &Value, key: &str) -> bool {
    evidence[key].as_array().is_some_and(Vec::is_empty)
}

/// Applies the scenario's oracle to its evidence. Missing or malformed
/// evidence never yields `Enforced`.
pub fn verdict(spec: &ScenarioSpec, evidence: &Value) -> Verdict {
    let ok = match spec.id {
        "S1" => {
            empty(evidence, "mismatches")
                && num(evidence, "l2_cross_vlan_delivered") == 0.0
                && num(evidence, "bypass_paths") == 0.0
        }
        "S2" | "S3" => evidence["spoofed_delivered"] == Value::Bool(false),
        "S4" => {
            let attempts = num(evidence, "poison_attempts");
            attempts > 0.0
                && num(evidence, "poison_rejected") == attempts
                && flag(evidence, "table_unchanged")
                && flag(evidence, "victim_replied")
                && num(evidence, "delivered_to_attacker") == 0.0
        }
        "S5" => evidence["blocked_command_delivered"] == Value::Bool(false),
        "S6" => evidence["malicious_file_delivered"] == Value::Bool(false),
        "S7" | "S8" | "S9" => {
            num(evidence, "cases") > 0.0
                && empty(evidence, "unauthorized_deliveries")
                && empty(evidence, "missing_deliveries")
        }
        "S10" => {
            num(evidence, "responses_to_client") <= 1.0
                && evidence["smuggled_delivered"] == Value::Bool(false)
        }
        "S11" => num(evidence, "max_service_ms") <= num(evidence, "threshold_ms"),
        "S12" => match evidence["knee_rpm"].as_f64() {
            Some(knee) => knee > num(evidence, "capacity_rpm"),
            None => evidence["knee_rpm"].is_null() && !empty(evidence, "series"),
        },
        "S13" => num(evidence, "latency_ms") <= num(evidence, "max_acceptable_latency_ms"),
        _ => false,
    };
    if ok {
        Verdict::Enforced
    } else {
        Verdict::NotEnforced
    }
}

/// Runs one scenario on a fresh network built from `cfg` and `policy`.
pub fn run_scenario_full(
    spec: &ScenarioSpec,
    cfg: &NetworkConfig,
    policy: &Arc<PolicySet>,
    seed: u64,
) -> Result<ScenarioRun, HarnessError> {
    let seed = scenario_seed(seed, spec.id);
    let outcome = scenarios::execute(spec.id, cfg, policy, seed)?;
    let verdict = verdict(spec, &outcome.evidence);
    Ok(ScenarioRun {
        result: ScenarioResult {
            id: spec.id.to_string(),
            title: spec.title.to_string(),
            cwe: spec.cwe.iter().map(|s| s.to_string()).collect(),
            policy_ref: spec.policy_ref.iter().map(|s| s.to_string()).collect(),
            verdict,
            evidence: outcome.evidence,
            virtual_duration_ms: outcome.duration.as_ms(),
        },
        trace: outcome.trace,
        stress: outcome.stress,
    })
}

pub fn run_scenario(
    spec: &ScenarioSpec,
    cfg: &NetworkConfig,
    policy: &Arc<PolicySet>,
    seed: u64,
) -> Result<ScenarioResult, HarnessError> {
    run_scenario_full(spec, cfg, policy, seed).map(|r| r.result)
}

/// Runs `specs` one after another; results come back in catalog order.
pub fn run_all(
    specs: &[&ScenarioSpec],
    cfg: &NetworkConfig,
    policy: &Arc<PolicySet>,
    seed: u64,
) -> Result<Vec<ScenarioRun>, HarnessError> {
    let mut runs = specs
        .iter()
        .map(|s| run_scenario_full(s, cfg, policy, seed))
        .collect::<Result<Vec<_>, _>>()?;
    runs.sort_by_key(|r| catalog_index(&r.result.id));
    Ok(runs)
}

#[cfg(test)]
mod tests;
