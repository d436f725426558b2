//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use alg_testbed::harness::{
    load_run, run_all, run_scenario, scenario, select_scenarios, stress, ScenarioRun, Verdict,
};
use alg_testbed::packet::{
    parse_ftp_command, parse_http_request, parse_http_response, serialize_http, FtpCommand,
    FtpMessage, HttpMessage, StartLine,
};
use alg_testbed::pattern::{compile, match_backtracking, match_budgeted, Engine};
use alg_testbed::policy::{load_policy, FtpScan, HeaderMode, PolicySet, ScanRule, SpoofAuth};
use alg_testbed::report::{build_report, config_digest, write_report};
use alg_testbed::vnet::{load_network, write_jsonl, Action, Network, NetworkConfig, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const NETWORK: &[u8] = include_bytes!("../../../configs/network.baseline.json");
const BASELINE: &[u8] = include_bytes!("../../../configs/policy.baseline.json");
const MITIGATED: &[u8] = include_bytes!("../../../configs/policy.mitigated.json");
const STRESS_NET: &[u8] = include_bytes!("../../../configs/network.stress.json");
const STRESS_POLICY: &[u8] = include_bytes!("../../../configs/policy.stress.json");
const EXPECTED: &[u8] = include_bytes!("../../../configs/expected.baseline.json");

const PROPERTY_CASES: usize = 10_000;

/// Any error, flattened to its message.
struct Fail(String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(e.to_string())
    }
}

type Check = Result<String, Fail>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), Fail> {
    if ok {
        Ok(())
    } else {
        Err(Fail(msg()))
    }
}

fn net() -> NetworkConfig {
    load_network(NETWORK).unwrap()
}

fn baseline() -> PolicySet {
    load_policy(BASELINE).unwrap()
}

fn verdicts(runs: &[ScenarioRun]) -> BTreeMap<String, Verdict> {
    runs.iter().map(|r| (r.result.id.clone(), r.result.verdict)).collect()
}

/// Result column of the observed-product table for S1 to S11.
const GOLDEN: [(&str, Verdict); 11] = [
    ("S1", Verdict::Enforced),
    ("S2", Verdict::NotEnforced),
    ("S3", Verdict::NotEnforced),
    ("S4", Verdict::Enforced),
    ("S5", Verdict::Enforced),
    ("S6", Verdict::NotEnforced),
    ("S7", Verdict::Enforced),
    ("S8", Verdict::Enforced),
    ("S9", Verdict::Enforced),
    ("S10", Verdict::NotEnforced),
    ("S11", Verdict::NotEnforced),
];

fn golden_table() -> Check {
    let shipped: BTreeMap<String, Verdict> = serde_json::from_slice(EXPECTED)?;
    for (id, v) in GOLDEN {
        ensure(shipped.get(id) == Some(&v), || format!("expected.baseline.json disagrees on {id}"))?;
    }
    let ids: Vec<&str> = GOLDEN.iter().map(|(id, _)| *id).collect();
    let started = Instant::now();
    let runs = run_all(&select_scenarios(&ids.join(","))?, &net(), &Arc::new(baseline()), 1)?;
    let elapsed = started.elapsed();
    let got = verdicts(&runs);
    ensure(got.len() == GOLDEN.len(), || format!("{} results", got.len()))?;
    for (id, v) in GOLDEN {
        ensure(got[id] == v, || format!("{id}: expected {v}, got {}", got[id]))?;
    }
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    let enforced = got.values().filter(|v| **v == Verdict::Enforced).count();
    Ok(format!(
        "all 11 rows match: {enforced} Enforced, {} Not Enforced, in {:.2} s",
        got.len() - enforced,
        elapsed.as_secs_f64()
    ))
}

/// Baseline policy with only the four mitigations switched on.
fn mitigated_from_baseline() -> PolicySet {
    let mut p = baseline();
    let tokens = p
        .ip_whitelist
        .iter()
        .map(|ip| (*ip, format!("secret-{ip}")))
        .collect();
    p.spoof_auth = SpoofAuth::Token { tokens };
    p.header_mode = HeaderMode::Strict;
    if let Some(rule) = &mut p.ftp_command_pattern {
        rule.engine = Engine::Budgeted;
        rule.step_limit = 100_000;
    }
    p.ftp_scan = FtpScan::On(ScanRule {
        pattern: compile("EVIL").unwrap(),
        engine: Engine::Budgeted,
        step_limit: 100_000,
    });
    p
}

fn mitigation_flip() -> Check {
    let specs = select_scenarios("all")?;
    let before = verdicts(&run_all(&specs, &net(), &Arc::new(baseline()), 1)?);
    let flipped = ["S2", "S3", "S6", "S10", "S11"];
    for policy in [mitigated_from_baseline(), load_policy(MITIGATED)?] {
        let after = verdicts(&run_all(&specs, &net(), &Arc::new(policy), 1)?);
        for (id, v) in &after {
            ensure(*v == Verdict::Enforced, || format!("{id} still {v}"))?;
            let was = before[id];
            ensure(flipped.contains(&id.as_str()) == (was == Verdict::NotEnforced), || {
                format!("{id} was {was}")
            })?;
        }
    }
    Ok("S2, S3, S6, S10, S11 flip to Enforced; no regressions".into())
}

/// Random pattern text over {a, b, c}, in the syntax both our parser and the
/// regex crate accept with the same meaning.
fn random_pattern(rng: &mut ChaCha8Rng, depth: u32) -> String {
    let atom = |rng: &mut ChaCha8Rng| -> String {
        ["a", "b", "c", ".", "[ab]", "[^c]", "[b-c]"][rng.random_range(0..7)].to_string()
    };
    let mut out = String::new();
    for _ in 0..rng.random_range(1..=3) {
        let roll = rng.random_range(0..10);
        let mut piece = if depth > 0 && roll < 3 {
            let branches: Vec<String> = (0..rng.random_range(1..=3))
                .map(|_| random_pattern(rng, depth - 1))
                .collect();
            format!("({})", branches.join("|"))
        } else if roll == 3 {
            // anchors are never repeated
            out.push_str(["^", "$"][rng.random_range(0..2)]);
            continue;
        } else {
            atom(rng)
        };
        if rng.random_bool(0.4) {
            piece.push(['*', '+', '?'][rng.random_range(0..3)]);
        }
        out.push_str(&piece);
    }
    out
}

fn random_input(rng: &mut ChaCha8Rng, max: usize) -> Vec<u8> {
    (0..rng.random_range(0..=max)).map(|_| b"abc"[rng.random_range(0..3)]).collect()
}

/// Matched bits of both engines against the regex crate, on seeded cases.
fn engine_differential(seed: u64) -> Result<(), Fail> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..PROPERTY_CASES {
        let text = random_pattern(&mut rng, 2);
        let input = random_input(&mut rng, 8);
        let p = compile(&text).map_err(|e| Fail(format!("case {case}: {text}: {e}")))?;
        let oracle = regex::bytes::Regex::new(&text).map_err(|e| Fail(format!("{text}: {e}")))?;
        let bt = match_backtracking(&p, &input);
        let pk = match_budgeted(&p, &input, u64::MAX).map_err(|e| Fail(format!("{e:?}")))?;
        let expected = oracle.is_match(&input);
        ensure(bt.matched == expected && pk.matched == expected, || {
            format!("case {case}: {text} on {:?}: bt {} budgeted {} oracle {expected}", String::from_utf8_lossy(&input), bt.matched, pk.matched)
        })?;
        let bound = p.state_count() as u64 * (input.len() as u64 + 1);
        ensure(pk.steps <= bound, || format!("case {case}: {text}: {} > {bound} steps", pk.steps))?;
    }
    Ok(())
}

fn redos_asymmetry() -> Check {
    let p = compile("(a|a)*b")?;
    let input = [b'a'; 20];
    let bt = match_backtracking(&p, &input);
    let pk = match_budgeted(&p, &input, u64::MAX).map_err(|e| Fail(format!("{e:?}")))?;
    ensure(!bt.matched && !pk.matched, || "pattern matched".into())?;
    ensure(bt.steps >= 1 << 20, || format!("backtracking took only {} steps", bt.steps))?;
    ensure(pk.steps <= 8 * 21, || format!("budgeted took {} steps", pk.steps))?;
    engine_differential(3)?;
    Ok(format!(
        "backtracking {} steps, budgeted {} steps, {PROPERTY_CASES} cases agree",
        bt.steps, pk.steps
    ))
}

fn smuggling() -> Check {
    let s10 = scenario("S10")?;
    let mut last_wins = baseline();
    last_wins.header_mode = HeaderMode::LastWins;
    let lw = run_scenario(s10, &net(), &Arc::new(last_wins), 1)?;
    ensure(lw.evidence["responses_to_client"] == 2, || format!("last_wins: {}", lw.evidence))?;
    let mut strict = baseline();
    strict.header_mode = HeaderMode::Strict;
    let st = run_scenario(s10, &net(), &Arc::new(strict), 1)?;
    ensure(
        st.evidence["responses_to_client"] == 1 && st.evidence["response_statuses"] == serde_json::json!([400]),
        || format!("strict: {}", st.evidence),
    )?;
    Ok("last_wins: 2 responses, strict: 1 rejection (400)".into())
}

fn stress_properties() -> Check {
    let cfg = load_network(STRESS_NET)?;
    let policy = Arc::new(load_policy(STRESS_POLICY)?);
    let capacity = policy.capacity_rpm;
    ensure(capacity == 100_000.0, || format!("capacity {capacity}"))?;
    let schedule: Vec<f64> = [0.25, 0.5, 0.75, 1.0].iter().map(|f| f * capacity).collect();
    let report = stress(&cfg, policy.clone(), &schedule)?;
    ensure(report.knee_rpm.is_none(), || format!("knee at {:?}", report.knee_rpm))?;
    for p in &report.points {
        ensure(p.completed == p.requests, || format!("{} of {} completed at {}", p.completed, p.requests, p.offered_rpm))?;
    }

    // Arrivals every 60 s / (2 * capacity), each needing `base`: request k
    // waits k * (base - gap) behind the ones before it.
    let base_ns = (cfg.alg.base_service_cost_ms * 1e6).round() as u64;
    let gap_ns = (60e9 / (2.0 * capacity)).round() as u64;
    let run = load_run(&cfg, policy, 2.0 * capacity, 2_000)?;
    for (k, l) in run.latencies.iter().enumerate() {
        let expected = base_ns + k as u64 * (base_ns - gap_ns);
        ensure(l.0 == expected, || format!("request {k}: {} ns, expected {expected}", l.0))?;
    }

    let s13 = run_scenario(scenario("S13")?, &net(), &Arc::new(baseline()), 1)?;
    ensure(s13.evidence["latency_ms"].as_f64() == Some(39.0), || format!("S13: {}", s13.evidence))?;
    Ok(format!(
        "no knee up to {capacity} rpm; slope {} ms per request at 2x; S13 39 ms",
        (base_ns - gap_ns) as f64 / 1e6
    ))
}

fn isolation() -> Check {
    let cfg = net();
    let raw: Value = serde_json::from_slice(BASELINE).unwrap();
    let default_deny = raw["isolation"]["default_deny"].as_bool().unwrap();
    let allowed: BTreeSet<(String, String)> = raw["isolation"]["allowed_connections"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["protocols"].as_array().unwrap().iter().any(|p| p == "icmp"))
        .flat_map(|c| {
            let (a, b) = (c["a"].as_str().unwrap().to_string(), c["b"].as_str().unwrap().to_string());
            [(a.clone(), b.clone()), (b, a)]
        })
        .collect();

    let mut net = Network::build(cfg.clone(), Arc::new(baseline()))?;
    let mut pairs = 0;
    for a in &cfg.hosts {
        for b in cfg.hosts.iter().filter(|b| b.name != a.name) {
            pairs += 1;
            let expected = a.vlan == b.vlan
                || !default_deny
                || allowed.contains(&(a.ip.to_string(), b.ip.to_string()));
            let replied = net.icmp_probe(&a.name, b.ip)? == alg_testbed::vnet::Reachability::Reply;
            ensure(replied == expected, || format!("{} -> {}: replied {replied}", a.name, b.name))?;
        }
    }

    // every delivery to a host on another VLAN than the originator passed the ALG
    let vlan_of_node = |node: &str| {
        let name = node.strip_prefix("host:")?;
        cfg.hosts.iter().find(|h| h.name == name).map(|h| h.vlan)
    };
    let mut cross = 0;
    for id in 0..net.frame_count() {
        let Some(t) = net.terminal(id) else { continue };
        let Some(dst_vlan) = (t.action == Action::Deliver).then(|| vlan_of_node(&t.node)).flatten() else {
            continue;
        };
        let mut chain = vec![id];
        while let Some(parent) = net.caused_by(*chain.last().unwrap()) {
            chain.push(parent);
        }
        let Some(Sender::Host(origin)) = net.sender(*chain.last().unwrap()) else { continue };
        if cfg.hosts[origin].vlan != dst_vlan {
            cross += 1;
            ensure(chain.iter().any(|&f| net.sender(f) == Some(Sender::Alg)), || {
                format!("frame {id} crossed VLANs without the ALG")
            })?;
        }
    }
    ensure(net.inter_vlan_bypasses().is_empty(), || "simulator reports a bypass".into())?;

    let s1 = run_scenario(scenario("S1")?, &cfg, &Arc::new(baseline()), 1)?;
    ensure(s1.verdict == Verdict::Enforced, || format!("S1: {}", s1.evidence))?;
    Ok(format!("{pairs} pairs match the allow set; {cross} cross-VLAN deliveries all via the ALG"))
}

fn determinism() -> Check {
    let specs = select_scenarios("all")?;
    let policy = Arc::new(baseline());
    let once = || -> Result<(Vec<u8>, Vec<u8>), Fail> {
        let runs = run_all(&specs, &net(), &policy, 5)?;
        let report = write_report(&build_report(config_digest(NETWORK, BASELINE), 5, &runs));
        let mut trace = Vec::new();
        for r in &runs {
            write_jsonl(&r.trace, &mut trace)?;
        }
        Ok((report, trace))
    };
    let (a, b) = (once()?, once()?);
    ensure(a.0 == b.0, || "reports differ".into())?;
    ensure(a.1 == b.1, || "traces differ".into())?;
    Ok(format!("{} report bytes, {} trace bytes identical", a.0.len(), a.1.len()))
}

fn token(rng: &mut ChaCha8Rng, alphabet: &[u8], len: std::ops::RangeInclusive<usize>) -> String {
    (0..rng.random_range(len))
        .map(|_| alphabet[rng.random_range(0..alphabet.len())] as char)
        .collect()
}

const TCHAR: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_.!#$%&'*+^`|~";
const VCHAR: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_./:;=?@ ()<>,\"";

fn random_http(rng: &mut ChaCha8Rng) -> HttpMessage {
    let start = if rng.random_bool(0.5) {
        StartLine::Request {
            method: token(rng, b"ABCDEFGHIJKLMNOPQRSTUVWXYZ", 1..=8),
            target: format!("/{}", token(rng, b"abcxyz0129/._-?=&%", 0..=20)),
            version: ["HTTP/1.1", "HTTP/1.0"][rng.random_range(0..2)].to_string(),
        }
    } else {
        StartLine::Response {
            version: "HTTP/1.1".to_string(),
            status: rng.random_range(100..=599),
            reason: token(rng, VCHAR, 0..=16).trim().to_string(),
        }
    };
    let headers = (0..rng.random_range(0..6))
        .map(|_| (token(rng, TCHAR, 1..=12), token(rng, VCHAR, 0..=24).trim().to_string()))
        .collect();
    let body = (0..rng.random_range(0..64)).map(|_| rng.random()).collect();
    HttpMessage { start, headers, body }
}

fn parser_round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..PROPERTY_CASES {
        let msg = random_http(&mut rng);
        let bytes = serialize_http(&msg);
        let back = match msg.start {
            StartLine::Request { .. } => parse_http_request(&bytes),
            StartLine::Response { .. } => parse_http_response(&bytes),
        };
        ensure(back.as_ref() == Ok(&msg), || format!("http case {case}: {msg:?} -> {back:?}"))?;
    }
    for case in 0..PROPERTY_CASES {
        let verb = token(&mut rng, b"ABCDEFGHIJKLMNOPQRSTUVWXYZ", 1..=6);
        let argument = token(&mut rng, VCHAR, 0..=40);
        let cmd = FtpCommand::new(&verb, &argument);
        let parsed = parse_ftp_command(&cmd.to_line());
        ensure(parsed.as_ref() == Ok(&cmd), || format!("ftp case {case}: {cmd:?} -> {parsed:?}"))?;
        let data: Vec<u8> = (0..rng.random_range(0..32)).map(|_| rng.random()).collect();
        let msg = FtpMessage::new(&cmd, data);
        let decoded = FtpMessage::decode(&msg.encode());
        ensure(decoded == msg, || format!("ftp message case {case}: {msg:?}"))?;
    }
    engine_differential(8)?;
    Ok(format!("{PROPERTY_CASES} cases each: HTTP, FTP, regex engines"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("golden verdict table", golden_table),
        ("mitigation flip", mitigation_flip),
        ("redos asymmetry", redos_asymmetry),
        ("smuggling", smuggling),
        ("stress properties", stress_properties),
        ("isolation exhaustiveness", isolation),
        ("determinism", determinism),
        ("round-trip and differential suites", parser_round_trips),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(Fail(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(Fail(why)) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
