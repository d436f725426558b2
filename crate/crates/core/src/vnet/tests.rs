use proptest::prelude::*;

use super::*;
use crate::packet::{make_mpeg, parse_http_response, FtpCommand};
use crate::policy::load_policy;

const BASELINE: &[u8] = include_bytes!("../../../../configs/policy.baseline.json");
const NETWORK: &[u8] = include_bytes!("../../../../configs/network.baseline.json");

fn ip(s: &str) -> IpAddr {
    s.parse().unwrap()
}

fn ms(v: u64) -> VirtualTime {
    VirtualTime::from_ms(v as f64)
}

fn net_with_cost(base_ms: f64) -> Network {
    let mut cfg = NetworkConfig::testbed();
    cfg.alg.base_service_cost_ms = base_ms;
    cfg.alg.regex_step_cost_ms = 0.0;
    Network::build(cfg, Arc::new(load_policy(BASELINE).unwrap())).unwrap()
}

fn baseline_net() -> Network {
    Network::build(load_network(NETWORK).unwrap(), Arc::new(load_policy(BASELINE).unwrap())).unwrap()
}

fn ping(net: &mut Network, from: &str, dst: &str, at: VirtualTime) -> FrameId {
    net.send_ipv4(from, ip(dst), Transport::Icmp { kind: IcmpKind::EchoRequest }, vec![], at)
        .unwrap()
}

#[test]
fn lone_frame_pays_one_service_time() {
    let mut net = net_with_cost(2.0);
    let id = ping(&mut net, "ftp-client", "10.10.20.5", VirtualTime::ZERO);
    assert_eq!(net.latency_of(id), Err(SimError::NotCompleted(id)));
    net.run_until_idle().unwrap();
    assert_eq!(net.latency_of(id).unwrap(), ms(2));
}

#[test]
fn second_arrival_waits_for_the_first() {
    let mut net = net_with_cost(2.0);
    let a = ping(&mut net, "ftp-client", "10.10.20.5", ms(0));
    let b = ping(&mut net, "ftp-client", "10.10.20.5", ms(1));
    net.run_until_idle().unwrap();
    assert_eq!(net.alg_timing(a).unwrap().departure, ms(2));
    let tb = net.alg_timing(b).unwrap();
    assert_eq!((tb.start, tb.departure), (ms(2), ms(4)));
    assert_eq!(net.latency_of(b).unwrap(), ms(3));
}

#[test]
fn burst_departs_at_multiples_of_service_time() {
    let mut net = net_with_cost(0.5);
    let ids: Vec<_> = (0..12)
        .map(|_| ping(&mut net, "ftp-client", "10.10.20.5", VirtualTime::ZERO))
        .collect();
    net.run_until_idle().unwrap();
    for (k, id) in ids.iter().enumerate() {
        assert_eq!(net.latency_of(*id).unwrap(), VirtualTime(500_000 * (k as u64 + 1)));
    }
}

#[test]
fn probes() {
    let mut net = baseline_net();
    // same VLAN: the switch delivers it without the ALG
    assert_eq!(net.icmp_probe("ftp-client", ip("10.10.10.3")).unwrap(), Reachability::Reply);
    assert_eq!(net.icmp_probe("ftp-client", ip("10.10.20.5")).unwrap(), Reachability::Reply);
    assert_eq!(
        net.icmp_probe("ftp-client", ip("10.10.20.3")).unwrap(),
        Reachability::Dropped {
            reason: "isolation".into(),
            drop_point: "alg".into()
        }
    );
    assert_eq!(net.icmp_probe("doc-server", ip("10.10.20.3")).unwrap(), Reachability::Reply);
    assert_eq!(net.icmp_probe("ftp-client", ip("10.10.10.1")).unwrap(), Reachability::Reply);
    assert!(matches!(
        net.icmp_probe("spoof", ip("10.10.10.3")).unwrap(),
        Reachability::Dropped { drop_point, .. } if drop_point == "alg"
    ));
    assert!(net.inter_vlan_bypasses().is_empty());
}

#[test]
fn direct_cross_vlan_frame_stops_at_the_switch() {
    let mut net = baseline_net();
    let src = net.config().host("ftp-client").unwrap().clone();
    let dst = net.config().host("ftp-mpeg-server").unwrap().clone();
    let frame = Frame::ipv4(
        src.mac,
        dst.mac,
        Ipv4Packet {
            src: src.ip,
            dst: dst.ip,
            transport: Transport::Icmp { kind: IcmpKind::EchoRequest },
            auth_token: None,
            payload: vec![],
        },
    );
    let id = net.inject_frame("ftp-client", frame, VirtualTime::ZERO).unwrap();
    net.run_until_idle().unwrap();
    let t = net.terminal(id).unwrap();
    assert_eq!((t.action, t.node.as_str(), t.reason.as_deref()), (Action::Drop, "switch:vlan10", Some("cross-vlan")));
    assert!(net.descendants(id).is_empty());
}

#[test]
fn arp_poisoning_is_rejected_and_table_unchanged() {
    let mut net = baseline_net();
    let before = net.arp_table().clone();
    let spoof_mac = net.config().host("spoof").unwrap().mac;
    let frame = arp_frame(ArpOp::Reply, spoof_mac, ip("10.10.20.5"), ip("10.10.20.1"));
    net.inject_frame("spoof", frame, VirtualTime::ZERO).unwrap();
    net.run_until_idle().unwrap();
    assert_eq!(net.arp_table(), &before);
    assert!(matches!(
        net.arp_events(),
        [(_, ArpEvent::PoisonAttemptRejected { .. })]
    ));
}

#[test]
fn arp_request_for_alg_address_is_answered() {
    let mut net = baseline_net();
    let mac = net.config().host("doc-server").unwrap().mac;
    let id = net
        .inject_frame("doc-server", arp_frame(ArpOp::Request, mac, ip("10.10.20.3"), ip("10.10.20.1")), VirtualTime::ZERO)
        .unwrap();
    net.run_until_idle().unwrap();
    let replies = net.descendants(id);
    assert_eq!(replies.len(), 1);
    assert_eq!(net.terminal(replies[0]).unwrap().node, "host:doc-server");
}

#[test]
fn mpeg_upload_is_proxied_and_answered() {
    let mut net = baseline_net();
    let body = make_mpeg(b"clip");
    let req = HttpMessage::request("POST", "/upload")
        .with_header("Content-Type", "video/mpeg")
        .with_header("Content-Length", &body.len().to_string())
        .with_body(body);
    let id = net
        .send_tcp("mpeg-client", ip("10.10.10.1"), 8085, req.to_bytes(), VirtualTime::ZERO)
        .unwrap();
    net.run_until_idle().unwrap();
    assert_eq!(net.delivered_to("ftp-mpeg-server").len(), 1);
    let back = net.delivered_to("mpeg-client");
    assert_eq!(back.len(), 1);
    let pkt = net.frame(back[0]).unwrap().as_ipv4().unwrap();
    assert_eq!(pkt.src, ip("10.10.10.1"));
    assert_eq!(pkt.transport.ports().unwrap().0, 8085);
    assert_eq!(parse_http_response(&pkt.payload).unwrap().status(), Some(200));
    assert!(net.descendants(id).contains(&back[0]));
    assert!(net.inter_vlan_bypasses().is_empty());
}

#[test]
fn blocked_ftp_verb_never_reaches_server() {
    let mut net = baseline_net();
    let payload = FtpMessage::new(&FtpCommand::new("MKD", "x"), vec![]).encode();
    let id = net.send_tcp("ftp-client", ip("10.10.20.5"), 21, payload, VirtualTime::ZERO).unwrap();
    net.run_until_idle().unwrap();
    assert!(net.delivered_to("ftp-mpeg-server").is_empty());
    let t = net.terminal(id).unwrap();
    assert_eq!(t.action, Action::Drop);
    let back = net.delivered_to("ftp-client");
    let reply = FtpReply::decode(&net.frame(back[0]).unwrap().as_ipv4().unwrap().payload).unwrap();
    assert_eq!(reply.code, 550);
}

#[test]
fn allowed_ftp_command_gets_server_reply() {
    let mut net = baseline_net();
    let payload = FtpMessage::new(&FtpCommand::new("LIST", ""), vec![]).encode();
    net.send_tcp("ftp-client", ip("10.10.20.5"), 21, payload, VirtualTime::ZERO).unwrap();
    net.run_until_idle().unwrap();
    assert_eq!(net.delivered_to("ftp-mpeg-server").len(), 1);
    let back = net.delivered_to("ftp-client");
    let reply = FtpReply::decode(&net.frame(back[0]).unwrap().as_ipv4().unwrap().payload).unwrap();
    assert_eq!(reply.code, 200);
}

#[test]
fn errors() {
    let mut net = baseline_net();
    assert_eq!(
        net.icmp_probe("nobody", ip("10.10.10.2")),
        Err(SimError::UnknownHost("nobody".into()))
    );
    ping(&mut net, "ftp-client", "10.10.20.5", ms(5));
    net.run_until_idle().unwrap();
    let err = net
        .send_ipv4("ftp-client", ip("10.10.20.5"), Transport::Icmp { kind: IcmpKind::EchoRequest }, vec![], ms(1))
        .unwrap_err();
    assert!(matches!(err, SimError::TimeInPast { .. }));
    let mtu = net.config().mtu;
    let err = net
        .send_tcp("ftp-client", ip("10.10.20.5"), 21, vec![0; mtu + 1], net.clock())
        .unwrap_err();
    assert_eq!(err, SimError::PayloadTooLarge { len: mtu + 1, mtu });
}

#[test]
fn static_binding_must_name_a_host() {
    let mut policy = load_policy(BASELINE).unwrap();
    policy.static_arp.insert(ip("10.10.20.99"), MacAddr([2, 0, 0, 0, 0, 1]));
    let err = Network::build(NetworkConfig::testbed(), Arc::new(policy)).unwrap_err();
    assert_eq!(err.pointer, "/static_arp/10.10.20.99");
}

#[test]
fn trace_is_jsonl() {
    let mut net = baseline_net();
    net.set_label("S1");
    net.icmp_probe("ftp-client", ip("10.10.20.5")).unwrap();
    let mut buf = Vec::new();
    net.write_trace_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), net.trace().len());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["scenario"], "S1");
        assert!(v["time"].is_number());
    }
}

const HOSTS: &[&str] = &["ftp-client", "mpeg-client", "doc-client", "doc-server", "ftp-mpeg-server", "spoof"];
const TARGETS: &[&str] = &[
    "10.10.10.2", "10.10.10.3", "10.10.10.4", "10.10.20.3", "10.10.20.5", "10.10.20.66", "10.10.10.1", "10.10.20.1",
];

#[derive(Debug, Clone)]
enum Op {
    Ping(usize, usize),
    Tcp(usize, usize, u16),
}

fn arb_ops() -> impl Strategy<Value = Vec<(u64, Op)>> {
    let op = prop_oneof![
        (0..HOSTS.len(), 0..TARGETS.len()).prop_map(|(h, t)| Op::Ping(h, t)),
        (0..HOSTS.len(), 0..TARGETS.len(), prop::sample::select(vec![21u16, 80, 8080, 8085, 22]))
            .prop_map(|(h, t, p)| Op::Tcp(h, t, p)),
    ];
    prop::collection::vec((0u64..200, op), 1..40)
}

fn run_ops(ops: &[(u64, Op)]) -> Network {
    let mut net = baseline_net();
    let mut ops = ops.to_vec();
    ops.sort_by_key(|(t, _)| *t);
    for (t, op) in &ops {
        let at = ms(*t);
        match op {
            Op::Ping(h, d) => {
                ping(&mut net, HOSTS[*h], TARGETS[*d], at);
            }
            Op::Tcp(h, d, p) => {
                net.send_tcp(HOSTS[*h], ip(TARGETS[*d]), *p, b"LIST\r\n".to_vec(), at).unwrap();
            }
        }
    }
    net.run_until_idle().unwrap();
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identical_inputs_give_identical_traces(ops in arb_ops()) {
        let (a, b) = (run_ops(&ops), run_ops(&ops));
        prop_assert_eq!(a.trace(), b.trace());
    }

    #[test]
    fn every_frame_ends_exactly_once(ops in arb_ops()) {
        let net = run_ops(&ops);
        for id in 0..net.frame_count() {
            let terminals = net.trace().iter().filter(|e| e.frame_id == id && e.action.is_terminal()).count();
            prop_assert_eq!(terminals, 1, "frame {}", id);
        }
    }

    #[test]
    fn nothing_crosses_vlans_without_the_alg(ops in arb_ops()) {
        prop_assert!(run_ops(&ops).inter_vlan_bypasses().is_empty());
    }

    #[test]
    fn alg_serves_in_arrival_order(ops in arb_ops()) {
        let net = run_ops(&ops);
        let mut served: Vec<AlgTiming> = (0..net.frame_count())
            .filter_map(|id| net.alg_timing(id))
            .filter(|t| t.departure > t.arrival)
            .collect();
        served.sort_by_key(|t| t.start);
        for w in served.windows(2) {
            prop_assert!(w[0].arrival <= w[1].arrival);
            prop_assert!(w[0].departure <= w[1].start);
        }
    }
}
