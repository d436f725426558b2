use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

use super::fuzz::{gen_fuzz_http, mutate, FuzzRequest, HttpTemplate};
use super::stress::{probe, stress, StressReport};
use super::HarnessError;
use crate::dpi::http::FUZZ_ID_HEADER;
use crate::packet::{
    make_mpeg, parse_http_request, parse_http_response, ArpOp, FileKind, Frame, FtpCommand,
    FtpMessage, FtpReply, HttpMessage, IcmpKind, IpAddr, Ipv4Packet, MacAddr, Transport,
};
use crate::policy::{ArpEvent, HeaderMode, PolicySet, ProtocolClass};
use crate::time::VirtualTime;
use crate::vnet::{
    arp_frame, Action, FrameId, HostConfig, Network, NetworkConfig, Reachability, TraceEntry,
};

const FTP_CLIENT: &str = "ftp-client";
const MPEG_CLIENT: &str = "mpeg-client";
const DOC_CLIENT: &str = "doc-client";
const DOC_SERVER: &str = "doc-server";
const FTP_MPEG_SERVER: &str = "ftp-mpeg-server";
const SPOOF: &str = "spoof";

const FTP_PORT: u16 = 21;
const FUZZ_CASES: usize = 200;
const FUZZ_SPACING_MS: f64 = 100.0;
const REDOS_MUTANTS: usize = 200;

/// Command line the mutation fuzzer starts from.
pub const REDOS_SEED_COMMAND: &[u8] = b"STOR aaaaaaaaaaaa.txt\r\n";

/// Upload with an embedded marker a content scanner is expected to catch.
const CRAFTED_FILE: &[u8] = b"MZ\x90\x00\x03\x00\x00\x00 dropper stage EVIL payload \xde\xad\xbe\xef";

pub(super) struct Outcome {
    pub evidence: Value,
    pub duration: VirtualTime,
    pub trace: Vec<TraceEntry>,
    pub stress: Option<StressReport>,
}

impl Outcome {
    fn from_net(net: &Network, evidence: Value) -> Self {
        Outcome {
            evidence,
            duration: net.clock(),
            trace: net.trace().to_vec(),
            stress: None,
        }
    }
}

pub(super) fn execute(
    id: &str,
    cfg: &NetworkConfig,
    policy: &Arc<PolicySet>,
    seed: u64,
) -> Result<Outcome, HarnessError> {
    let ctx = Ctx { id, cfg, policy };
    match id {
        "S1" => ctx.isolation(),
        "S2" => ctx.spoofing(FTP_MPEG_SERVER, MPEG_CLIENT, Forge::Ip),
        "S3" => ctx.spoofing(DOC_SERVER, DOC_CLIENT, Forge::Mac),
        "S4" => ctx.arp_poisoning(),
        "S5" => ctx.ftp_blocked_verb(),
        "S6" => ctx.ftp_crafted_upload(),
        "S7" => ctx.route_fuzz(MPEG_CLIENT, &route_template(), seed),
        "S8" => ctx.route_fuzz(
            DOC_CLIENT,
            &HttpTemplate {
                whitelisted_author_share: 0.9,
                ..route_template()
            },
            seed,
        ),
        "S9" => ctx.route_fuzz(
            DOC_CLIENT,
            &HttpTemplate {
                ports: vec![8080],
                kinds: vec![FileKind::Doc],
                content_types: vec!["application/msword".into()],
                whitelisted_author_share: 0.25,
                max_duplicate_content_types: 0,
                ..HttpTemplate::default()
            },
            seed,
        ),
        "S10" => ctx.smuggling(),
        "S11" => ctx.redos(seed),
        "S12" => ctx.throughput(),
        "S13" => ctx.latency(),
        other => Err(HarnessError::UnknownScenario(other.to_string())),
    }
}

fn route_template() -> HttpTemplate {
    HttpTemplate {
        ports: vec![8085, 8080, 8081],
        ..HttpTemplate::default()
    }
}

fn ms(v: f64) -> VirtualTime {
    VirtualTime::from_ms(v)
}

fn terminal_json(net: &Network, id: FrameId) -> Value {
    match net.terminal(id) {
        Some(t) => json!({"node": t.node, "action": t.action, "reason": t.reason}),
        None => Value::Null,
    }
}

/// `id` and its descendants that were delivered to `host`.
fn delivered_at(net: &Network, id: FrameId, host: &str) -> Vec<FrameId> {
    let node = format!("host:{host}");
    std::iter::once(id)
        .chain(net.descendants(id))
        .filter(|&f| {
            net.terminal(f)
                .is_some_and(|t| t.action == Action::Deliver && t.node == node)
        })
        .collect()
}

fn payload_of(net: &Network, id: FrameId) -> &[u8] {
    net.frame(id)
        .and_then(Frame::as_ipv4)
        .map_or(&[][..], |p| &p.payload[..])
}

fn ftp_reply_to(net: &Network, id: FrameId, client: &str) -> Option<u16> {
    delivered_at(net, id, client)
        .into_iter()
        .find_map(|f| FtpReply::decode(payload_of(net, f)))
        .map(|r| r.code)
}

#[derive(Clone, Copy)]
enum Forge {
    Ip,
    Mac,
}

struct Ctx<'a> {
    id: &'a str,
    cfg: &'a NetworkConfig,
    policy: &'a Arc<PolicySet>,
}

impl Ctx<'_> {
    fn network(&self) -> Result<Network, HarnessError> {
        let mut net = Network::build(self.cfg.clone(), self.policy.clone())?;
        net.set_label(self.id);
        Ok(net)
    }

    fn host(&self, name: &str) -> Result<HostConfig, HarnessError> {
        self.cfg
            .host(name)
            .cloned()
            .ok_or_else(|| HarnessError::MissingHost(name.to_string()))
    }

    fn alg_ip_for(&self, host: &HostConfig) -> Result<IpAddr, HarnessError> {
        self.cfg
            .alg_ip_on(host.vlan)
            .ok_or_else(|| HarnessError::MissingHost(format!("alg on {}", host.vlan)))
    }

    /// Reachability between every ordered pair of distinct hosts must be
    /// exactly: same VLAN, or an ICMP connection in the isolation policy.
    fn isolation(&self) -> Result<Outcome, HarnessError> {
        let mut net = self.network()?;
        let hosts = self.cfg.hosts.clone();
        let mut reachable = Vec::new();
        let mut mismatches = Vec::new();
        let mut pairs = 0;
        for a in &hosts {
            for b in hosts.iter().filter(|b| b.name != a.name) {
                pairs += 1;
                let expected = a.vlan == b.vlan
                    || self.policy.isolation.allows(a.ip, b.ip, ProtocolClass::Icmp);
                let observed = net.icmp_probe(&a.name, b.ip)?;
                let replied = observed == Reachability::Reply;
                if replied {
                    reachable.push(format!("{}->{}", a.name, b.name));
                }
                if replied != expected {
                    let detail = match observed {
                        Reachability::Reply => json!("reply"),
                        Reachability::Dropped { reason, drop_point } => {
                            json!({"dropped_at": drop_point, "reason": reason})
                        }
                    };
                    mismatches.push(json!({
                        "from": a.name, "to": b.name, "expected_reachable": expected, "observed": detail,
                    }));
                }
            }
        }

        // frames addressed straight to a peer's MAC on another VLAN
        let mut direct = Vec::new();
        let at = net.clock();
        for a in &hosts {
            for b in hosts.iter().filter(|b| b.vlan != a.vlan) {
                let frame = Frame::ipv4(
                    a.mac,
                    b.mac,
                    Ipv4Packet {
                        src: a.ip,
                        dst: b.ip,
                        transport: Transport::Icmp { kind: IcmpKind::EchoRequest },
                        auth_token: None,
                        payload: Vec::new(),
                    },
                );
                direct.push((net.inject_frame(&a.name, frame, at)?, b.name.clone()));
            }
        }
        net.run_until_idle()?;
        let leaked = direct
            .iter()
            .filter(|(id, to)| !delivered_at(&net, *id, to).is_empty())
            .count();

        let evidence = json!({
            "pairs": pairs,
            "reachable": reachable,
            "mismatches": mismatches,
            "l2_cross_vlan_attempts": direct.len(),
            "l2_cross_vlan_delivered": leaked,
            "bypass_paths": net.inter_vlan_bypasses().len(),
        });
        Ok(Outcome::from_net(&net, evidence))
    }

    /// The spoof host impersonates `victim` towards `target`. Both whitelists
    /// are in force, so the forged frame carries the victim's IP and MAC.
    /// A control frame forges only the other field and must be refused.
    fn spoofing(&self, victim: &str, target: &str, forge: Forge) -> Result<Outcome, HarnessError> {
        let mut net = self.network()?;
        let victim = self.host(victim)?;
        let target = self.host(target)?;
        let spoof = self.host(SPOOF)?;
        let alg_mac = self.cfg.alg.mac;
        let echo = |src: IpAddr, src_mac: MacAddr, tag: &[u8]| {
            Frame::ipv4(
                src_mac,
                alg_mac,
                Ipv4Packet {
                    src,
                    dst: target.ip,
                    transport: Transport::Icmp { kind: IcmpKind::EchoRequest },
                    auth_token: None,
                    payload: tag.to_vec(),
                },
            )
        };
        let forged = net.inject_frame(SPOOF, echo(victim.ip, victim.mac, b"forged"), VirtualTime::ZERO)?;
        let (control_ip, control_mac) = match forge {
            Forge::Ip => (spoof.ip, victim.mac),
            Forge::Mac => (victim.ip, spoof.mac),
        };
        let control = net.inject_frame(SPOOF, echo(control_ip, control_mac, b"control"), ms(1000.0))?;
        net.run_until_idle()?;

        let evidence = json!({
            "impersonated": {"ip": victim.ip, "mac": victim.mac},
            "target": target.ip,
            "spoofed_delivered": !delivered_at(&net, forged, &target.name).is_empty(),
            "spoofed_outcome": terminal_json(&net, forged),
            "control": {
                "src_ip": control_ip,
                "src_mac": control_mac,
                "delivered": !delivered_at(&net, control, &target.name).is_empty(),
                "outcome": terminal_json(&net, control),
            },
        });
        Ok(Outcome::from_net(&net, evidence))
    }

    fn arp_poisoning(&self) -> Result<Outcome, HarnessError> {
        let mut net = self.network()?;
        let victim = self.host(FTP_MPEG_SERVER)?;
        let client = self.host(MPEG_CLIENT)?;
        let spoof = self.host(SPOOF)?;
        let alg_ip = self.alg_ip_for(&victim)?;
        let before = net.arp_table().clone();

        let attempts = [
            arp_frame(ArpOp::Reply, spoof.mac, victim.ip, victim.ip),
            arp_frame(ArpOp::Request, spoof.mac, victim.ip, alg_ip),
        ];
        let n_attempts = attempts.len();
        for (k, frame) in attempts.into_iter().enumerate() {
            net.inject_frame(SPOOF, frame, ms(10.0 * k as f64))?;
        }
        net.run_until_idle()?;
        let table_unchanged = *net.arp_table() == before;

        let ping = net.send_ipv4(
            MPEG_CLIENT,
            victim.ip,
            Transport::Icmp { kind: IcmpKind::EchoRequest },
            Vec::new(),
            net.clock() + ms(1000.0),
        )?;
        net.run_until_idle()?;
        let victim_replied = delivered_at(&net, ping, &client.name).into_iter().any(|f| {
            matches!(
                net.frame(f).and_then(Frame::as_ipv4).map(|p| p.transport),
                Some(Transport::Icmp { kind: IcmpKind::EchoReply })
            )
        });
        let events: Vec<_> = net.arp_events().iter().map(|(_, e)| e.clone()).collect();
        let rejected = events
            .iter()
            .filter(|e| matches!(e, ArpEvent::PoisonAttemptRejected { .. }))
            .count();

        let evidence = json!({
            "poison_attempts": n_attempts,
            "poison_rejected": rejected,
            "arp_events": events,
            "table_unchanged": table_unchanged,
            "echo_reached_victim": !delivered_at(&net, ping, &victim.name).is_empty(),
            "victim_replied": victim_replied,
            "delivered_to_attacker": net.delivered_to(SPOOF).len(),
        });
        Ok(Outcome::from_net(&net, evidence))
    }

    fn ftp_pair(
        &self,
        attack: &FtpMessage,
        control: &FtpMessage,
    ) -> Result<(Network, FrameId, FrameId, HostConfig), HarnessError> {
        let mut net = self.network()?;
        let server = self.host(FTP_MPEG_SERVER)?;
        let a = net.send_tcp(FTP_CLIENT, server.ip, FTP_PORT, attack.encode(), VirtualTime::ZERO)?;
        let c = net.send_tcp(FTP_CLIENT, server.ip, FTP_PORT, control.encode(), ms(1000.0))?;
        net.run_until_idle()?;
        Ok((net, a, c, server))
    }

    fn ftp_blocked_verb(&self) -> Result<Outcome, HarnessError> {
        let (net, mkd, list, server) = self.ftp_pair(
            &FtpMessage::new(&FtpCommand::new("MKD", "uploads_private"), Vec::new()),
            &FtpMessage::new(&FtpCommand::new("LIST", ""), Vec::new()),
        )?;
        let evidence = json!({
            "command": "MKD uploads_private",
            "blocked_command_delivered": !delivered_at(&net, mkd, &server.name).is_empty(),
            "reply_code": ftp_reply_to(&net, mkd, FTP_CLIENT),
            "outcome": terminal_json(&net, mkd),
            "control_delivered": !delivered_at(&net, list, &server.name).is_empty(),
            "control_reply_code": ftp_reply_to(&net, list, FTP_CLIENT),
        });
        Ok(Outcome::from_net(&net, evidence))
    }

    fn ftp_crafted_upload(&self) -> Result<Outcome, HarnessError> {
        let (net, crafted, benign, server) = self.ftp_pair(
            &FtpMessage::new(&FtpCommand::new("CP", "payload.dat"), CRAFTED_FILE),
            &FtpMessage::new(&FtpCommand::new("CP", "notes.txt"), &b"meeting at noon"[..]),
        )?;
        let evidence = json!({
            "command": "CP payload.dat",
            "file_bytes": CRAFTED_FILE.len(),
            "malicious_file_delivered": !delivered_at(&net, crafted, &server.name).is_empty(),
            "reply_code": ftp_reply_to(&net, crafted, FTP_CLIENT),
            "outcome": terminal_json(&net, crafted),
            "control_delivered": !delivered_at(&net, benign, &server.name).is_empty(),
        });
        Ok(Outcome::from_net(&net, evidence))
    }

    /// Generated uploads from `client`, one every 100 ms. Each must end up
    /// exactly where the independent oracle says, or nowhere.
    fn route_fuzz(&self, client: &str, template: &HttpTemplate, seed: u64) -> Result<Outcome, HarnessError> {
        let mut net = self.network()?;
        let client = self.host(client)?;
        let alg_ip = self.alg_ip_for(&client)?;
        let cases = gen_fuzz_http(template, seed, FUZZ_CASES);
        let mut ids = Vec::with_capacity(cases.len());
        for (k, case) in cases.iter().enumerate() {
            let at = ms(FUZZ_SPACING_MS * k as f64);
            ids.push(net.send_tcp(&client.name, alg_ip, case.ingress_port, case.message.to_bytes(), at)?);
        }
        net.run_until_idle()?;

        let client_node = format!("host:{}", client.name);
        let mut expected_forwards = 0;
        let mut forwarded = 0;
        let mut statuses: BTreeMap<String, usize> = BTreeMap::new();
        let mut unauthorized = Vec::new();
        let mut missing = Vec::new();
        for (case, &id) in cases.iter().zip(&ids) {
            let expected = expected_destination(self.policy, client.ip, case);
            expected_forwards += usize::from(expected.is_some());
            let mut reached = Vec::new();
            for f in net.descendants(id) {
                let Some(t) = net.terminal(f).filter(|t| t.action == Action::Deliver) else {
                    continue;
                };
                if t.node == client_node {
                    let status = parse_http_response(payload_of(&net, f))
                        .ok()
                        .and_then(|r| r.status())
                        .map_or("unparseable".to_string(), |s| s.to_string());
                    *statuses.entry(status).or_default() += 1;
                } else if let Some(p) = net.frame(f).and_then(Frame::as_ipv4) {
                    if let Transport::Tcp { dst_port, .. } = p.transport {
                        reached.push((p.dst, dst_port));
                    }
                }
            }
            forwarded += reached.len();
            let describe = |reached: &[(IpAddr, u16)]| {
                json!({
                    "fuzz_id": case.id,
                    "port": case.ingress_port,
                    "kind": case.kind,
                    "content_types": case.content_types,
                    "author": case.author,
                    "reached": reached.iter().map(|(ip, port)| format!("{ip}:{port}")).collect::<Vec<_>>(),
                })
            };
            if reached.iter().any(|r| Some(*r) != expected) {
                unauthorized.push(describe(&reached));
            }
            if let Some(e) = expected {
                if !reached.contains(&e) {
                    missing.push(describe(&reached));
                }
            }
        }

        let evidence = json!({
            "client": client.ip,
            "cases": cases.len(),
            "expected_forwards": expected_forwards,
            "forwarded": forwarded,
            "responses_by_status": statuses,
            "unauthorized_deliveries": unauthorized,
            "missing_deliveries": missing,
        });
        Ok(Outcome::from_net(&net, evidence))
    }

    fn smuggling(&self) -> Result<Outcome, HarnessError> {
        let mut net = self.network()?;
        let client = self.host(MPEG_CLIENT)?;
        let alg_ip = self.alg_ip_for(&client)?;
        let port = self
            .policy
            .content_routes
            .iter()
            .find(|r| r.allowed_src_ip == client.ip)
            .map_or(8085, |r| r.ingress_port);
        let id = net.send_tcp(&client.name, alg_ip, port, smuggling_payload(), VirtualTime::ZERO)?;
        net.run_until_idle()?;

        let mut responses = Vec::new();
        let mut forwarded_ids = Vec::new();
        for f in net.descendants(id) {
            let Some(t) = net.terminal(f).filter(|t| t.action == Action::Deliver) else {
                continue;
            };
            let payload = payload_of(&net, f);
            if t.node == format!("host:{}", client.name) {
                responses.push(parse_http_response(payload).ok().and_then(|r| r.status()));
            } else if let Ok(req) = parse_http_request(payload) {
                forwarded_ids.push(req.header(FUZZ_ID_HEADER).unwrap_or("").to_string());
            }
        }
        let evidence = json!({
            "header_mode": self.policy.header_mode,
            "responses_to_client": responses.len(),
            "response_statuses": responses,
            "requests_reaching_servers": forwarded_ids,
            "smuggled_delivered": forwarded_ids.iter().any(|t| t == "smuggled"),
            "outcome": terminal_json(&net, id),
        });
        Ok(Outcome::from_net(&net, evidence))
    }

    /// Mutants of a sniffed STOR command, one per virtual second. The ALG's
    /// time on the worst one is compared with the latency ceiling.
    fn redos(&self, seed: u64) -> Result<Outcome, HarnessError> {
        let mut net = self.network()?;
        let server = self.host(FTP_MPEG_SERVER)?;
        let mutants = mutate(REDOS_SEED_COMMAND, seed, REDOS_MUTANTS);
        let mut ids = Vec::with_capacity(mutants.len());
        for (k, m) in mutants.iter().enumerate() {
            ids.push(net.send_tcp(FTP_CLIENT, server.ip, FTP_PORT, m.clone(), ms(1000.0 * k as f64))?);
        }
        net.run_until_idle()?;

        let threshold = self.policy.max_acceptable_latency_ms;
        let mut worst: Option<(f64, usize)> = None;
        let mut max_steps = 0;
        let mut over = 0;
        let mut over_million = 0;
        let mut total = 0.0;
        for (k, &id) in ids.iter().enumerate() {
            let Some(t) = net.alg_timing(id) else { continue };
            let service = t.service().as_ms();
            total += service;
            max_steps = max_steps.max(t.steps);
            over += usize::from(service > threshold);
            over_million += usize::from(t.steps > 1_000_000);
            if worst.is_none_or(|(s, _)| service > s) {
                worst = Some((service, k));
            }
        }
        let (max_service, worst_idx) = worst.unwrap_or((0.0, 0));
        let worst_text = mutants
            .get(worst_idx)
            .map(|m| String::from_utf8_lossy(m).trim_end().to_string());
        let evidence = json!({
            "mutants": mutants.len(),
            "threshold_ms": threshold,
            "max_service_ms": max_service,
            "mean_service_ms": if ids.is_empty() { 0.0 } else { total / ids.len() as f64 },
            "max_steps": max_steps,
            "mutants_over_threshold": over,
            "mutants_over_1e6_steps": over_million,
            "worst_mutant": worst_text,
            "pattern": self.policy.ftp_command_pattern.as_ref().map(|r| r.pattern.source().to_string()),
        });
        Ok(Outcome::from_net(&net, evidence))
    }

    fn throughput(&self) -> Result<Outcome, HarnessError> {
        let capacity = self.policy.capacity_rpm;
        let schedule: Vec<f64> = [0.25, 0.5, 0.75, 1.0].iter().map(|f| f * capacity).collect();
        let report = stress(self.cfg, self.policy.clone(), &schedule)?;
        let evidence = json!({
            "capacity_rpm": capacity,
            "base_service_cost_ms": report.base_service_cost_ms,
            "knee_rpm": report.knee_rpm,
            "series": report.points,
        });
        Ok(Outcome {
            evidence,
            duration: ms(report.virtual_duration_ms),
            trace: Vec::new(),
            stress: Some(report),
        })
    }

    fn latency(&self) -> Result<Outcome, HarnessError> {
        let probe = probe(self.cfg, self.policy)?;
        let mut net = self.network()?;
        let id = net.send_tcp(&probe.client, probe.alg_ip, probe.port, probe.payload, VirtualTime::ZERO)?;
        net.run_until_idle()?;
        let latency = net.latency_of(id)?;
        let status = delivered_at(&net, id, &probe.client)
            .into_iter()
            .find_map(|f| parse_http_response(payload_of(&net, f)).ok())
            .and_then(|r| r.status());
        let evidence = json!({
            "latency_ms": latency.as_ms(),
            "max_acceptable_latency_ms": self.policy.max_acceptable_latency_ms,
            "base_service_cost_ms": self.cfg.alg.base_service_cost_ms,
            "response_status": status,
        });
        Ok(Outcome::from_net(&net, evidence))
    }
}

/// Where `case` should be delivered when sent from `src`, judged from what
/// the generator put into it rather than from parsing the wire bytes.
pub fn expected_destination(policy: &PolicySet, src: IpAddr, case: &FuzzRequest) -> Option<(IpAddr, u16)> {
    let route = policy
        .content_routes
        .iter()
        .find(|r| r.ingress_port == case.ingress_port && r.allowed_src_ip == src)?;
    if policy.header_mode == HeaderMode::Strict && case.content_types.len() > 1 {
        return None;
    }
    let declared = case.content_types.last().map(String::as_str);
    if case.kind != route.required_kind || declared != route.required_kind.content_type() {
        return None;
    }
    if case.kind == FileKind::Doc
        && !case
            .author
            .as_ref()
            .is_some_and(|a| policy.author_whitelist.contains(a))
    {
        return None;
    }
    Some((route.dest_ip, route.dest_port))
}

/// Content-Length 4 then 11. The 11-byte MPEG body is followed by a second,
/// complete upload that only a last-wins reader sees as a new request.
fn smuggling_payload() -> Vec<u8> {
    let inner_body = make_mpeg(b"inner");
    let inner = HttpMessage::request("POST", "/upload")
        .with_header("Host", "alg")
        .with_header("Content-Type", "video/mpeg")
        .with_header("Content-Length", &inner_body.len().to_string())
        .with_header(FUZZ_ID_HEADER, "smuggled")
        .with_body(inner_body);
    let mut body = make_mpeg(b"outer!!");
    body.extend_from_slice(&inner.to_bytes());
    HttpMessage::request("POST", "/upload")
        .with_header("Host", "alg")
        .with_header("Content-Type", "video/mpeg")
        .with_header("Content-Length", "4")
        .with_header("Content-Length", "11")
        .with_header(FUZZ_ID_HEADER, "outer")
        .with_body(body)
        .to_bytes()
}
