use std::sync::Arc;

use serde_json::json;

use super::*;
use crate::dpi::{normalize, route_by_content, RouteDecision};
use crate::pattern::{compile, match_backtracking_limited};
use crate::policy::{load_policy, HeaderMode, SpoofAuth};
use crate::time::VirtualTime;
use crate::vnet::load_network;

const BASELINE: &[u8] = include_bytes!("../../../../configs/policy.baseline.json");
const MITIGATED: &[u8] = include_bytes!("../../../../configs/policy.mitigated.json");
const NETWORK: &[u8] = include_bytes!("../../../../configs/network.baseline.json");
const STRESS_NET: &[u8] = include_bytes!("../../../../configs/network.stress.json");
const STRESS_POLICY: &[u8] = include_bytes!("../../../../configs/policy.stress.json");

fn baseline() -> Arc<PolicySet> {
    Arc::new(load_policy(BASELINE).unwrap())
}

fn net() -> NetworkConfig {
    load_network(NETWORK).unwrap()
}

fn run(id: &str, policy: &Arc<PolicySet>) -> ScenarioResult {
    run_scenario(scenario(id).unwrap(), &net(), policy, 7).unwrap()
}

#[test]
fn selection() {
    let picked = select_scenarios("S4, s2,S4").unwrap();
    assert_eq!(picked.iter().map(|s| s.id).collect::<Vec<_>>(), ["S2", "S4"]);
    assert_eq!(select_scenarios("all").unwrap().len(), 13);
    assert!(matches!(select_scenarios("S2,S99"), Err(HarnessError::UnknownScenario(id)) if id == "S99"));
}

#[test]
fn every_scenario_cwe_is_cataloged() {
    for s in &SCENARIOS {
        assert!(!s.cwe.is_empty());
        for c in s.cwe {
            assert!(crate::cwe::lookup(c).unwrap().implemented, "{c}");
        }
    }
}

#[test]
fn latency_threshold_oracle() {
    let s13 = scenario("S13").unwrap();
    let ev = |max: f64| json!({"latency_ms": 39.0, "max_acceptable_latency_ms": max});
    assert_eq!(verdict(s13, &ev(50.0)), Verdict::Enforced);
    assert_eq!(verdict(s13, &ev(10.0)), Verdict::NotEnforced);
    assert_eq!(verdict(s13, &json!({})), Verdict::NotEnforced);
}

#[test]
fn one_reachable_forbidden_pair_fails_isolation() {
    let s1 = scenario("S1").unwrap();
    let clean = json!({"mismatches": [], "l2_cross_vlan_delivered": 0, "bypass_paths": 0});
    assert_eq!(verdict(s1, &clean), Verdict::Enforced);
    let leaky = json!({
        "mismatches": [{"from": "ftp-client", "to": "doc-server", "expected_reachable": false, "observed": "reply"}],
        "l2_cross_vlan_delivered": 0,
        "bypass_paths": 0,
    });
    assert_eq!(verdict(s1, &leaky), Verdict::NotEnforced);
}

#[test]
fn lone_request_takes_exactly_the_base_cost() {
    let r = run("S13", &baseline());
    assert_eq!(r.verdict, Verdict::Enforced);
    assert_eq!(r.evidence["latency_ms"], json!(39.0));
    assert_eq!(r.evidence["response_status"], json!(200));

    let mut tight = load_policy(BASELINE).unwrap();
    tight.max_acceptable_latency_ms = 10.0;
    assert_eq!(run("S13", &Arc::new(tight)).verdict, Verdict::NotEnforced);
}

#[test]
fn ip_spoof_passes_address_checks_but_not_tokens() {
    let r = run("S2", &baseline());
    assert_eq!(r.verdict, Verdict::NotEnforced);
    assert_eq!(r.evidence["control"]["outcome"]["reason"], "ip-not-whitelisted");

    let mut tokens = load_policy(BASELINE).unwrap();
    tokens.spoof_auth = load_policy(MITIGATED).unwrap().spoof_auth;
    assert!(matches!(tokens.spoof_auth, SpoofAuth::Token { .. }));
    let r = run("S2", &Arc::new(tokens));
    assert_eq!(r.verdict, Verdict::Enforced);
    assert_eq!(r.evidence["spoofed_outcome"]["reason"], "auth-token-mismatch");
}

#[test]
fn mac_spoof_control_is_caught_by_mac_whitelist() {
    let r = run("S3", &baseline());
    assert_eq!(r.verdict, Verdict::NotEnforced);
    assert_eq!(r.evidence["control"]["outcome"]["reason"], "mac-not-whitelisted");
}

#[test]
fn arp_poisoning_is_refused() {
    let r = run("S4", &baseline());
    assert_eq!(r.verdict, Verdict::Enforced, "{}", r.evidence);
    assert_eq!(r.evidence["poison_rejected"], 2);
}

#[test]
fn smuggling_depends_on_header_mode() {
    let r = run("S10", &baseline());
    assert_eq!(r.verdict, Verdict::NotEnforced);
    assert_eq!(r.evidence["responses_to_client"], 2);
    let mut strict = load_policy(BASELINE).unwrap();
    strict.header_mode = HeaderMode::Strict;
    let r = run("S10", &Arc::new(strict));
    assert_eq!(r.verdict, Verdict::Enforced);
    assert_eq!(r.evidence["response_statuses"], json!([400]));
}

#[test]
fn scenario_results_do_not_depend_on_order() {
    let p = baseline();
    let specs = select_scenarios("S5,S2,S9").unwrap();
    let forward = run_all(&specs, &net(), &p, 3).unwrap();
    let mut reversed = specs.clone();
    reversed.reverse();
    let backward = run_all(&reversed, &net(), &p, 3).unwrap();
    let a: Vec<_> = forward.iter().map(|r| &r.result).collect();
    let b: Vec<_> = backward.iter().map(|r| &r.result).collect();
    assert_eq!(a, b);
}

#[test]
fn fuzzer_is_deterministic() {
    let t = HttpTemplate::default();
    assert_eq!(gen_fuzz_http(&t, 11, 50), gen_fuzz_http(&t, 11, 50));
    assert_ne!(gen_fuzz_http(&t, 11, 50), gen_fuzz_http(&t, 12, 50));
    assert!(gen_fuzz_http(&t, 11, 0).is_empty());
    assert_eq!(mutate(b"STOR x", 5, 30), mutate(b"STOR x", 5, 30));
    assert!(mutate(b"", 5, 30).is_empty());
}

#[test]
fn mismatched_port_or_kind_never_routes() {
    let p = load_policy(BASELINE).unwrap();
    let cases = gen_fuzz_http(&HttpTemplate::default(), 99, 1000);
    for src in ["10.10.10.3", "10.10.10.4"] {
        let src = src.parse().unwrap();
        let mut checked = 0;
        for case in &cases {
            let matches = p
                .content_routes
                .iter()
                .any(|r| r.ingress_port == case.ingress_port && r.allowed_src_ip == src && r.required_kind == case.kind);
            if matches {
                continue;
            }
            let Ok(n) = normalize(&case.message, p.header_mode) else { continue };
            checked += 1;
            assert!(
                matches!(route_by_content(&p, &n.request, case.ingress_port, src), RouteDecision::Reject(_)),
                "{case:?}"
            );
        }
        assert!(checked > 500);
    }
}

#[test]
fn expansion_operator() {
    let m = Mutation::RunExpansion { start: 5, len: 1, times: 8 };
    assert_eq!(m.apply(b"STOR x"), b"STOR xxxxxxxx");
    assert_eq!(Mutation::TokenDuplication { index: 0 }.apply(b"STOR x"), b"STOR STOR x");
    assert_eq!(Mutation::ByteFlip { at: 0, bit: 5 }.apply(b"STOR x"), b"sTOR x");
}

#[test]
fn expansion_mutants_blow_up_backtracking() {
    let evil = compile("^(a|a)*b$").unwrap();
    let over = mutate(REDOS_SEED_COMMAND, scenario_seed(7, "S11"), 200)
        .iter()
        .filter_map(|m| crate::packet::FtpMessage::decode(m).command().ok())
        .filter(|c| match_backtracking_limited(&evil, c.argument.as_bytes(), 1_000_000).is_err())
        .count();
    assert!(over > 0);
}

#[test]
fn under_capacity_latency_is_the_base_cost() {
    let cfg = load_network(STRESS_NET).unwrap();
    let policy = Arc::new(load_policy(STRESS_POLICY).unwrap());
    let run = load_run(&cfg, policy, 50_000.0, 2_000).unwrap();
    assert!(run.latencies.iter().all(|&l| l == VirtualTime::from_ms(0.6)));
    assert_eq!(run.completed, 2_000);
}

#[test]
fn overload_latency_grows_by_the_arrival_deficit() {
    // service 0.6 ms, arrivals every 0.3 ms: request k waits 0.3 ms longer than k-1
    let cfg = load_network(STRESS_NET).unwrap();
    let policy = Arc::new(load_policy(STRESS_POLICY).unwrap());
    let run = load_run(&cfg, policy, 200_000.0, 1_000).unwrap();
    for (k, l) in run.latencies.iter().enumerate() {
        assert_eq!(*l, VirtualTime(600_000 + 300_000 * k as u64), "request {k}");
    }
}

#[test]
fn stress_rejects_bad_schedules() {
    let cfg = load_network(STRESS_NET).unwrap();
    let policy = Arc::new(load_policy(STRESS_POLICY).unwrap());
    assert!(matches!(stress(&cfg, policy.clone(), &[10.0, 10.0]), Err(HarnessError::InvalidSchedule)));
    assert!(matches!(stress(&cfg, policy, &[0.0]), Err(HarnessError::InvalidSchedule)));
}
