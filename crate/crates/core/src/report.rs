//! Machine-readable run report and verdict expectations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{Number, Value};
use sha2::{Digest, Sha256};

use crate::config::from_json;
use crate::cwe::CATALOG;
use crate::harness::{ScenarioResult, ScenarioRun, StressReport, Verdict};
use crate::ConfigError;

pub const SCHEMA_VERSION: u32 = 1;

/// Digits kept after the decimal point for every float in a report.
pub const FLOAT_DECIMALS: i32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogRef {
    pub cwe_id: String,
    pub description: String,
    pub implemented: bool,
    /// Scenario ids in this report tagged with the weakness.
    pub scenarios: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub config_digest: String,
    pub seed: u64,
    pub results: Vec<ScenarioResult>,
    pub stress: Option<StressReport>,
    pub catalog: Vec<CatalogRef>,
}

/// `sha256:` followed by the hex digest of the network bytes, a zero byte,
/// and the policy bytes.
pub fn config_digest(network: &[u8], policy: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(network);
    h.update([0u8]);
    h.update(policy);
    format!("sha256:{}", hex::encode(h.finalize()))
}

pub fn build_report(config_digest: String, seed: u64, runs: &[ScenarioRun]) -> Report {
    let results: Vec<ScenarioResult> = runs.iter().map(|r| r.result.clone()).collect();
    let catalog = CATALOG
        .iter()
        .map(|e| CatalogRef {
            cwe_id: e.cwe_id.to_string(),
            description: e.description.to_string(),
            implemented: e.implemented,
            scenarios: results
                .iter()
                .filter(|r| r.cwe.iter().any(|c| c == e.cwe_id))
                .map(|r| r.id.clone())
                .collect(),
        })
        .collect();
    Report {
        schema_version: SCHEMA_VERSION,
        config_digest,
        seed,
        results,
        stress: runs.iter().find_map(|r| r.stress.clone()),
        catalog,
    }
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let scale = 10f64.powi(FLOAT_DECIMALS);
            let r = (n.as_f64().unwrap_or(0.0) * scale).round() / scale;
            // -0.0 and 0.0 must print the same
            let r = if r == 0.0 { 0.0 } else { r };
            *v = Number::from_f64(r).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Sorted keys, floats rounded to a fixed number of decimals, two-space
/// indentation and a trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_value(value).expect("report values serialize");
    round_floats(&mut v);
    let mut out = serde_json::to_vec_pretty(&v).expect("a Value always serializes");
    out.push(b'\n');
    out
}

pub fn write_report(report: &Report) -> Vec<u8> {
    canonical_json(report)
}

/// One line per scenario, for terminals.
pub fn summary(report: &Report) -> String {
    let mut out = String::new();
    for r in &report.results {
        let _ = writeln!(
            out,
            "{:<4} {:<9} {:<13} {}",
            r.id,
            r.cwe.join(","),
            r.verdict.to_string(),
            r.title
        );
    }
    if let Some(s) = &report.stress {
        let knee = s.knee_rpm.map_or("none".to_string(), |k| format!("{k} req/min"));
        let _ = writeln!(out, "stress knee: {knee}");
    }
    out
}

/// Expected verdict per scenario id.
pub type Expectations = BTreeMap<String, Verdict>;

pub fn load_expectations(json: &[u8]) -> Result<Expectations, ConfigError> {
    let exp: Expectations = from_json(json)?;
    for id in exp.keys() {
        if crate::harness::scenario(id).is_err() {
            return Err(ConfigError::at(format!("/{id}"), "unknown scenario id"));
        }
    }
    Ok(exp)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub id: String,
    pub expected: Verdict,
    pub actual: Verdict,
}

/// Results whose verdict differs from the expectation. Scenarios without an
/// expectation are not compared.
pub fn compare(expect: &Expectations, results: &[ScenarioResult]) -> Vec<Mismatch> {
    results
        .iter()
        .filter_map(|r| {
            let expected = *expect.get(&r.id)?;
            (expected != r.verdict).then(|| Mismatch {
                id: r.id.clone(),
                expected,
                actual: r.verdict,
            })
        })
        .collect()
}
