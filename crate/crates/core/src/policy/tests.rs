use proptest::prelude::*;

use super::*;
use crate::packet::{ArpMessage, ArpOp, IcmpKind, Ipv4Packet};

const BASELINE: &[u8] = include_bytes!("../../../../configs/policy.baseline.json");
const MITIGATED: &[u8] = include_bytes!("../../../../configs/policy.mitigated.json");

fn baseline() -> PolicySet {
    load_policy(BASELINE).unwrap()
}

fn mac_of(ip: &str) -> MacAddr {
    let o: IpAddr = ip.parse().unwrap();
    let o = o.octets();
    MacAddr([0x02, 0x00, o[0], o[1], o[2], o[3]])
}

fn ping(src: &str, dst: &str) -> Frame {
    Frame::ipv4(
        mac_of(src),
        MacAddr([0x02, 0, 10, 10, 20, 1]),
        Ipv4Packet {
            src: src.parse().unwrap(),
            dst: dst.parse().unwrap(),
            transport: Transport::Icmp {
                kind: IcmpKind::EchoRequest,
            },
            auth_token: None,
            payload: Vec::new(),
        },
    )
}

fn tcp(src: &str, dst: &str, dst_port: u16) -> Frame {
    let mut f = ping(src, dst);
    if let crate::packet::FrameBody::Ipv4(p) = &mut f.body {
        p.transport = Transport::Tcp {
            src_port: 50000,
            dst_port,
        };
    }
    f
}

fn decide(policy: &PolicySet, frame: &Frame, local: bool) -> Decision {
    decide_l3(policy, frame, local, None, VirtualTime::ZERO)
}

#[test]
fn baseline_config_loads() {
    let p = baseline();
    assert_eq!(p.content_routes.len(), 2);
    assert!(p.ftp_blocked_verbs.contains("MKD"));
    assert_eq!(p.header_mode, HeaderMode::LastWins);
    assert_eq!(p.spoof_auth, SpoofAuth::AddressOnly);
    assert!(matches!(p.ftp_scan, FtpScan::Off));
    assert_eq!(p.max_acceptable_latency_ms, 50.0);
}

#[test]
fn mitigated_config_loads() {
    let p = load_policy(MITIGATED).unwrap();
    assert_eq!(p.header_mode, HeaderMode::Strict);
    assert!(matches!(p.ftp_scan, FtpScan::On(ref r) if r.engine == Engine::Budgeted));
    assert_eq!(p.spoof_auth.token_for("10.10.10.3".parse().unwrap()), Some("tok-10-10-10-3"));
}

#[test]
fn empty_object_is_rejected() {
    let err = load_policy(b"{}").unwrap_err();
    assert_eq!(err.pointer, "");
    assert!(err.message.contains("missing field"), "{err}");
}

#[test]
fn route_port_collision_is_rejected() {
    let mut doc: serde_json::Value = serde_json::from_slice(BASELINE).unwrap();
    doc["content_routes"][1]["ingress_port"] = 8085.into();
    let err = load_policy(doc.to_string().as_bytes()).unwrap_err();
    assert_eq!(err.pointer, "/content_routes/1/ingress_port");
}

#[test]
fn unknown_route_kind_is_rejected() {
    let mut doc: serde_json::Value = serde_json::from_slice(BASELINE).unwrap();
    doc["content_routes"][0]["required_kind"] = "unknown".into();
    let err = load_policy(doc.to_string().as_bytes()).unwrap_err();
    assert_eq!(err.pointer, "/content_routes/0/required_kind");
}

#[test]
fn unknown_keys_are_rejected() {
    let mut doc: serde_json::Value = serde_json::from_slice(BASELINE).unwrap();
    doc["isolation"]["fallback"] = true.into();
    let err = load_policy(doc.to_string().as_bytes()).unwrap_err();
    assert!(err.pointer.starts_with("/isolation"), "{err}");
}

#[test]
fn bad_nested_value_reports_its_pointer() {
    let mut doc: serde_json::Value = serde_json::from_slice(BASELINE).unwrap();
    doc["ip_whitelist"][1] = "10.10.10.300".into();
    let err = load_policy(doc.to_string().as_bytes()).unwrap_err();
    assert_eq!(err.pointer, "/ip_whitelist/1");
}

#[test]
fn bad_pattern_is_rejected() {
    let mut doc: serde_json::Value = serde_json::from_slice(BASELINE).unwrap();
    doc["url_blocklist"] = serde_json::json!(["/ok", "(unclosed"]);
    let err = load_policy(doc.to_string().as_bytes()).unwrap_err();
    assert_eq!(err.pointer, "/url_blocklist/1");
}

#[test]
fn unknown_source_ip_is_denied() {
    let d = decide(&baseline(), &ping("10.10.10.99", "10.10.20.5"), false);
    assert_eq!(d, Decision::deny(DenyReason::IpNotWhitelisted));
    assert_eq!(DenyReason::IpNotWhitelisted.as_str(), "ip-not-whitelisted");
}

#[test]
fn unknown_source_mac_is_denied() {
    let mut f = ping("10.10.10.3", "10.10.20.5");
    f.src_mac = MacAddr([0x02, 0, 0xde, 0xad, 0xbe, 0xef]);
    assert_eq!(decide(&baseline(), &f, false), Decision::deny(DenyReason::MacNotWhitelisted));
}

#[test]
fn spoofed_identity_passes_address_only_mode() {
    // a frame forged with the full identity of 10.10.10.3 is indistinguishable
    assert_eq!(decide(&baseline(), &ping("10.10.10.3", "10.10.20.5"), false), Decision::Allow);
}

#[test]
fn token_mode_rejects_missing_or_wrong_token() {
    let p = load_policy(MITIGATED).unwrap();
    let mut f = ping("10.10.10.3", "10.10.20.5");
    assert_eq!(decide(&p, &f, false), Decision::deny(DenyReason::AuthTokenMismatch));
    if let crate::packet::FrameBody::Ipv4(pkt) = &mut f.body {
        pkt.auth_token = Some("guess".into());
    }
    assert_eq!(decide(&p, &f, false), Decision::deny(DenyReason::AuthTokenMismatch));
    if let crate::packet::FrameBody::Ipv4(pkt) = &mut f.body {
        pkt.auth_token = Some("tok-10-10-10-3".into());
    }
    assert_eq!(decide(&p, &f, false), Decision::Allow);
}

#[test]
fn isolation_blocks_unlisted_pairs() {
    let p = baseline();
    assert_eq!(decide(&p, &ping("10.10.10.2", "10.10.20.3"), false), Decision::deny(DenyReason::Isolation));
    assert_eq!(decide(&p, &ping("10.10.20.3", "10.10.10.4"), false), Decision::Allow);
}

#[test]
fn dispatch_to_inspectors() {
    let p = baseline();
    assert_eq!(
        decide(&p, &tcp("10.10.10.3", "10.10.10.1", 8085), true),
        Decision::ForwardToInspector(Inspector::Http)
    );
    assert_eq!(
        decide(&p, &tcp("10.10.10.2", "10.10.20.5", 21), false),
        Decision::ForwardToInspector(Inspector::Ftp)
    );
    assert_eq!(
        decide(&p, &tcp("10.10.10.2", "10.10.10.1", 8085), true),
        Decision::ForwardToInspector(Inspector::Http)
    );
    assert_eq!(
        decide(&p, &tcp("10.10.10.2", "10.10.10.1", 22), true),
        Decision::deny(DenyReason::ProtocolNotAllowed)
    );
}

#[test]
fn port_rule_first_match_wins() {
    let mut p = baseline();
    p.allowed_protocols.insert(ProtocolClass::Udp);
    let mut f = ping("10.10.10.2", "10.10.20.5");
    if let crate::packet::FrameBody::Ipv4(pkt) = &mut f.body {
        pkt.transport = Transport::Udp {
            src_port: 5000,
            dst_port: 53,
        };
    }
    assert_eq!(decide(&p, &f, false), Decision::deny(DenyReason::PortRule));
    p.port_rules.insert(
        0,
        PortRule {
            proto: IpProto::Udp,
            dst_port: Some(53),
            action: RuleAction::Allow,
        },
    );
    assert_eq!(decide(&p, &f, false), Decision::deny(DenyReason::Isolation));
}

#[test]
fn bucket_is_charged_after_address_checks() {
    let p = baseline();
    let mut bucket = TokenBucket::new(1.0, 1.0);
    let f = ping("10.10.10.3", "10.10.20.5");
    let t = VirtualTime::ZERO;
    assert_eq!(decide_l3(&p, &ping("10.10.10.99", "10.10.20.5"), false, Some(&mut bucket), t), Decision::deny(DenyReason::IpNotWhitelisted));
    assert_eq!(decide_l3(&p, &f, false, Some(&mut bucket), t), Decision::Allow);
    assert_eq!(decide_l3(&p, &f, false, Some(&mut bucket), t), Decision::deny(DenyReason::RateExceeded));
}

#[test]
fn bandwidth_scope_follows_applies_to() {
    let mut p = baseline();
    p.bandwidth = Some(Bandwidth {
        rate_per_sec: 1.0,
        burst: 1.0,
        applies_to: Some(BTreeSet::from([ProtocolClass::Http])),
    });
    let mut bucket = TokenBucket::new(1.0, 1.0);
    let t = VirtualTime::ZERO;
    for _ in 0..5 {
        assert_eq!(bandwidth_admit(&p, &mut bucket, t, ProtocolClass::Icmp), Decision::Allow);
    }
    assert_eq!(bandwidth_admit(&p, &mut bucket, t, ProtocolClass::Http), Decision::Allow);
    assert_eq!(bandwidth_admit(&p, &mut bucket, t, ProtocolClass::Http), Decision::deny(DenyReason::RateExceeded));
}

const IPS: &[&str] = &[
    "10.10.10.2", "10.10.10.3", "10.10.10.4", "10.10.20.3", "10.10.20.5", "10.10.10.99", "10.10.20.66",
];

fn arb_frame() -> impl Strategy<Value = (Frame, bool)> {
    (
        prop::sample::select(IPS),
        prop::sample::select(IPS),
        prop::sample::select(IPS),
        prop_oneof![Just(None), Just(Some(21u16)), Just(Some(8085)), Just(Some(8080)), Just(Some(443))],
        any::<bool>(),
    )
        .prop_map(|(src, mac_ip, dst, port, local)| {
            let mut f = match port {
                None => ping(src, dst),
                Some(p) => tcp(src, dst, p),
            };
            f.src_mac = mac_of(mac_ip);
            (f, local)
        })
}

fn is_allowed(d: Decision) -> bool {
    !matches!(d, Decision::Deny { .. })
}

proptest! {
    #[test]
    fn decision_is_pure((frame, local) in arb_frame()) {
        let p = baseline();
        prop_assert_eq!(decide(&p, &frame, local), decide(&p, &frame, local));
    }

    #[test]
    fn empty_whitelists_deny_everything((frame, local) in arb_frame()) {
        let mut p = baseline();
        p.ip_whitelist.clear();
        p.mac_whitelist.clear();
        prop_assert!(!is_allowed(decide(&p, &frame, local)));
    }

    #[test]
    fn widening_a_whitelist_never_denies_more(
        (frame, local) in arb_frame(),
        extra_ip in prop::sample::select(IPS),
        extra_mac in prop::sample::select(IPS),
    ) {
        let p = baseline();
        let before = decide(&p, &frame, local);
        let mut wider = p.clone();
        wider.ip_whitelist.insert(extra_ip.parse().unwrap());
        wider.mac_whitelist.insert(mac_of(extra_mac));
        if is_allowed(before) {
            prop_assert_eq!(decide(&wider, &frame, local), before);
        }
    }

    #[test]
    fn arp_table_never_leaves_static_bindings(
        msgs in prop::collection::vec(
            (any::<bool>(), prop::sample::select(IPS), prop::sample::select(IPS), any::<[u8; 6]>()),
            0..32,
        )
    ) {
        let p = baseline();
        let table = ArpTable::from_policy(&p);
        let alg_ips: Vec<IpAddr> = vec!["10.10.10.1".parse().unwrap(), "10.10.20.1".parse().unwrap()];
        for (request, sender, target, mac) in msgs {
            let msg = ArpMessage {
                op: if request { ArpOp::Request } else { ArpOp::Reply },
                sender_ip: sender.parse().unwrap(),
                sender_mac: MacAddr(mac),
                target_ip: target.parse().unwrap(),
                target_mac: MacAddr::BROADCAST,
            };
            let out = handle_arp(&table, &msg, &alg_ips, MacAddr([2, 0, 10, 10, 11, 1]));
            if let ArpEvent::PoisonAttemptRejected { .. } = out.event {
                prop_assert!(out.reply.is_none());
            }
        }
        prop_assert_eq!(table.bindings(), &p.static_arp);
    }
}
