//! Offered-load sweeps against the ALG's HTTP path.

use std::sync::Arc;

use serde::Serialize;

use super::HarnessError;
use crate::packet::{make_doc, make_mpeg, FileKind, HttpMessage, IpAddr};
use crate::policy::PolicySet;
use crate::time::VirtualTime;
use crate::vnet::{Action, Network, NetworkConfig};

const MINUTE_NS: f64 = 60.0 * VirtualTime::NANOS_PER_SEC as f64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressPoint {
    /// Requests per virtual minute.
    pub offered_rpm: f64,
    pub requests: usize,
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
    /// Requests whose response made it back to the client.
    pub completed: usize,
    /// Requests dropped by the bandwidth limit.
    pub rate_limited: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressReport {
    pub base_service_cost_ms: f64,
    pub points: Vec<StressPoint>,
    /// First offered rate whose mean latency exceeds twice the base cost.
    pub knee_rpm: Option<f64>,
    pub virtual_duration_ms: f64,
}

/// Per-request outcome of one load run, in send order.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadRun {
    pub latencies: Vec<VirtualTime>,
    pub completed: usize,
    pub rate_limited: usize,
    pub duration: VirtualTime,
}

pub(super) struct Probe {
    pub client: String,
    pub alg_ip: IpAddr,
    pub port: u16,
    pub payload: Vec<u8>,
}

/// A request the first content route accepts, sent by the client it names.
pub(super) fn probe(cfg: &NetworkConfig, policy: &PolicySet) -> Result<Probe, HarnessError> {
    let route = policy.content_routes.first().ok_or(HarnessError::NoContentRoute)?;
    let client = cfg
        .host_by_ip(route.allowed_src_ip)
        .ok_or_else(|| HarnessError::MissingHost(route.allowed_src_ip.to_string()))?;
    let alg_ip = cfg
        .alg_ip_on(client.vlan)
        .ok_or_else(|| HarnessError::MissingHost(format!("alg on {}", client.vlan)))?;
    let body = match route.required_kind {
        FileKind::Doc => {
            let author = policy.author_whitelist.iter().next().map_or("", String::as_str);
            make_doc(author, b"load")
        }
        _ => make_mpeg(b"load"),
    };
    let mut msg = HttpMessage::request("POST", "/upload").with_header("Host", "alg");
    if let Some(ct) = route.required_kind.content_type() {
        msg = msg.with_header("Content-Type", ct);
    }
    let msg = msg
        .with_header("Content-Length", &body.len().to_string())
        .with_body(body);
    Ok(Probe {
        client: client.name.clone(),
        alg_ip,
        port: route.ingress_port,
        payload: msg.to_bytes(),
    })
}

/// Sends `count` requests spaced uniformly at `rpm` and reports each one's
/// time in the ALG.
pub fn load_run(
    cfg: &NetworkConfig,
    policy: Arc<PolicySet>,
    rpm: f64,
    count: usize,
) -> Result<LoadRun, HarnessError> {
    let probe = probe(cfg, &policy)?;
    let mut net = Network::build(cfg.clone(), policy)?;
    net.set_trace_enabled(false);
    let gap = if rpm > 0.0 { MINUTE_NS / rpm } else { 0.0 };
    let ids = (0..count)
        .map(|k| {
            let at = VirtualTime((k as f64 * gap).round() as u64);
            net.send_tcp(&probe.client, probe.alg_ip, probe.port, probe.payload.clone(), at)
        })
        .collect::<Result<Vec<_>, _>>()?;
    net.run_until_idle()?;

    let client_node = format!("host:{}", probe.client);
    let mut out = LoadRun {
        latencies: Vec::with_capacity(count),
        completed: 0,
        rate_limited: 0,
        duration: net.clock(),
    };
    for id in ids {
        out.latencies.push(net.latency_of(id)?);
        if net.terminal(id).and_then(|t| t.reason.as_deref()) == Some("rate-exceeded") {
            out.rate_limited += 1;
        }
        let answered = net.descendants(id).into_iter().any(|d| {
            net.terminal(d)
                .is_some_and(|t| t.action == Action::Deliver && t.node == client_node)
        });
        out.completed += usize::from(answered);
    }
    Ok(out)
}

/// Runs one virtual minute of load per entry of `schedule` (requests per
/// minute, strictly increasing), each on a fresh network.
pub fn stress(
    cfg: &NetworkConfig,
    policy: Arc<PolicySet>,
    schedule: &[f64],
) -> Result<StressReport, HarnessError> {
    if schedule.windows(2).any(|w| w[0] >= w[1]) || schedule.iter().any(|r| !(*r > 0.0)) {
        return Err(HarnessError::InvalidSchedule);
    }
    let base = cfg.alg.base_service_cost_ms;
    let mut report = StressReport {
        base_service_cost_ms: base,
        points: Vec::with_capacity(schedule.len()),
        knee_rpm: None,
        virtual_duration_ms: 0.0,
    };
    for &rpm in schedule {
        let count = (rpm.floor() as usize).max(1);
        let run = load_run(cfg, policy.clone(), rpm, count)?;
        let total: f64 = run.latencies.iter().map(|l| l.as_ms()).sum();
        let mean = total / run.latencies.len() as f64;
        let max = run.latencies.iter().map(|l| l.as_ms()).fold(0.0, f64::max);
        if report.knee_rpm.is_none() && mean > 2.0 * base {
            report.knee_rpm = Some(rpm);
        }
        report.virtual_duration_ms += run.duration.as_ms();
        report.points.push(StressPoint {
            offered_rpm: rpm,
            requests: count,
            mean_latency_ms: mean,
            max_latency_ms: max,
            completed: run.completed,
            rate_limited: run.rate_limited,
        });
    }
    Ok(report)
}
