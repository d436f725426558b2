//! Discrete-event simulation of the VLAN network and its ALG.
//!
//! Links and switches are instantaneous. The only place time passes is the
//! ALG, a single FIFO server: a frame that arrives at `a` starts service at
//! `max(a, previous departure)` and leaves after
//! `base + per_byte * payload_len + regex_step * steps`, where `steps` is
//! whatever pattern work the inspection of that frame performed.
//!
//! Responses from servers to the ALG's own proxy connections are relayed
//! at arrival without queueing; they carry no policy decision of their own.

mod config;
mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::dpi::{self, FtpAction, FtpDirection, HttpOutcome};
use crate::packet::{
    parse_http_request, ArpMessage, ArpOp, Frame, FrameBody, FtpMessage, FtpReply, HttpMessage,
    IcmpKind, IpAddr, Ipv4Packet, MacAddr, Transport, VlanId, UPLOAD_VERBS,
};
use crate::policy::{
    decide_l3, handle_arp, ArpEvent, ArpTable, Decision, Inspector, PolicySet, TokenBucket,
};
use crate::time::VirtualTime;
use crate::ConfigError;

pub use config::{
    load_network, AlgConfig, AlgInterface, HostConfig, NetworkConfig, Service, Subnet, VlanConfig,
    DEFAULT_MTU,
};
pub use trace::{write_jsonl, Action, TraceEntry};

pub type FrameId = usize;

/// Hard cap on events processed by one `run_until_idle` call.
pub const EVENT_CAP: u64 = 10_000_000;

const ALG_NODE: &str = "alg";
const PROXY_PORTS: std::ops::RangeInclusive<u16> = 40000..=49151;
const HOST_PORTS_START: u16 = 49152;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown host {0:?}")]
    UnknownHost(String),
    #[error("cannot schedule at {at} before the current clock {clock}")]
    TimeInPast { at: VirtualTime, clock: VirtualTime },
    #[error("payload of {len} bytes exceeds the MTU of {mtu}")]
    PayloadTooLarge { len: usize, mtu: usize },
    #[error("simulation exceeded {0} events")]
    SimOverrun(u64),
    #[error("frame {0} has not completed ALG service")]
    NotCompleted(FrameId),
    #[error("no frame with id {0}")]
    UnknownFrame(FrameId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reachability {
    Reply,
    Dropped { reason: String, drop_point: String },
}

/// Who put a frame on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sender {
    Host(usize),
    Alg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgTiming {
    pub arrival: VirtualTime,
    pub start: VirtualTime,
    pub departure: VirtualTime,
    pub steps: u64,
}

impl AlgTiming {
    pub fn latency(&self) -> VirtualTime {
        self.departure - self.arrival
    }

    pub fn service(&self) -> VirtualTime {
        self.departure - self.start
    }
}

/// How a frame's life ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Terminal {
    pub time: VirtualTime,
    pub node: String,
    pub action: Action,
    pub reason: Option<String>,
}

#[derive(Debug, Clone)]
struct FrameRecord {
    frame: Frame,
    sender: Sender,
    caused_by: Option<FrameId>,
    children: Vec<FrameId>,
    alg: Option<AlgTiming>,
    departed: bool,
    terminal: Option<Terminal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Switch(FrameId),
    AlgArrive(FrameId),
    AlgDepart(FrameId),
    HostReceive(usize, FrameId),
}

#[derive(Debug, Clone)]
struct ProxyEntry {
    client_ip: IpAddr,
    client_port: u16,
    /// The ALG address and port the client originally spoke to.
    front_ip: IpAddr,
    front_port: u16,
    server_ip: IpAddr,
    server_port: u16,
}

/// Result of servicing one frame, applied at its departure.
#[derive(Debug, Clone)]
struct Service_ {
    outputs: Vec<Frame>,
    action: Action,
    reason: Option<String>,
}

#[derive(Debug)]
struct AlgState {
    queue: VecDeque<FrameId>,
    in_service: Option<(FrameId, Service_)>,
    arp: ArpTable,
    arp_events: Vec<(VirtualTime, ArpEvent)>,
    bucket: Option<TokenBucket>,
    proxy: BTreeMap<u16, ProxyEntry>,
    next_proxy_port: u16,
    base_ns: f64,
    per_byte_ns: f64,
    per_step_ns: f64,
}

/// One simulated network instance. Single-threaded; build one per run.
#[derive(Debug)]
pub struct Network {
    config: NetworkConfig,
    policy: Arc<PolicySet>,
    clock: VirtualTime,
    seq: u64,
    events: BinaryHeap<Reverse<(VirtualTime, u64, Event)>>,
    frames: Vec<FrameRecord>,
    next_host_port: Vec<u16>,
    alg: AlgState,
    trace: Vec<TraceEntry>,
    trace_enabled: bool,
    label: Option<String>,
}

impl Network {
    /// Validates `config` against itself and against the policy's static
    /// ARP bindings, which must all name configured hosts.
    pub fn build(config: NetworkConfig, policy: Arc<PolicySet>) -> Result<Network, ConfigError> {
        config.validate()?;
        for (ip, mac) in &policy.static_arp {
            match config.host_by_ip(*ip) {
                Some(h) if h.mac == *mac => {}
                Some(h) => {
                    return Err(ConfigError::at(
                        format!("/static_arp/{ip}"),
                        format!("binding {mac} disagrees with host {} ({})", h.name, h.mac),
                    ))
                }
                None => {
                    return Err(ConfigError::at(
                        format!("/static_arp/{ip}"),
                        "static binding for an address no host has",
                    ))
                }
            }
        }
        let ns = |ms: f64| ms * VirtualTime::NANOS_PER_MS as f64;
        let alg = AlgState {
            queue: VecDeque::new(),
            in_service: None,
            arp: ArpTable::from_policy(&policy),
            arp_events: Vec::new(),
            bucket: TokenBucket::from_policy(&policy),
            proxy: BTreeMap::new(),
            next_proxy_port: *PROXY_PORTS.start(),
            base_ns: ns(config.alg.base_service_cost_ms),
            per_byte_ns: ns(config.alg.per_byte_cost_ms),
            per_step_ns: ns(config.alg.regex_step_cost_ms),
        };
        Ok(Network {
            next_host_port: vec![HOST_PORTS_START; config.hosts.len()],
            config,
            policy,
            clock: VirtualTime::ZERO,
            seq: 0,
            events: BinaryHeap::new(),
            frames: Vec::new(),
            alg,
            trace: Vec::new(),
            trace_enabled: true,
            label: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn policy(&self) -> &PolicySet {
        &self.policy
    }

    pub fn clock(&self) -> VirtualTime {
        self.clock
    }

    /// Tags every subsequent trace entry with `label`.
    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = Some(label.into());
    }

    /// Stops recording trace entries. Frame outcomes are still tracked.
    pub fn set_trace_enabled(&mut self, enabled: bool) {
        self.trace_enabled = enabled;
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn write_trace_jsonl<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        write_jsonl(&self.trace, out)
    }

    pub fn arp_table(&self) -> &ArpTable {
        &self.alg.arp
    }

    pub fn arp_events(&self) -> &[(VirtualTime, ArpEvent)] {
        &self.alg.arp_events
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, id: FrameId) -> Option<&Frame> {
        self.frames.get(id).map(|r| &r.frame)
    }

    pub fn sender(&self, id: FrameId) -> Option<Sender> {
        self.frames.get(id).map(|r| r.sender)
    }

    pub fn caused_by(&self, id: FrameId) -> Option<FrameId> {
        self.frames.get(id).and_then(|r| r.caused_by)
    }

    pub fn terminal(&self, id: FrameId) -> Option<&Terminal> {
        self.frames.get(id).and_then(|r| r.terminal.as_ref())
    }

    pub fn alg_timing(&self, id: FrameId) -> Option<AlgTiming> {
        self.frames.get(id).and_then(|r| r.alg)
    }

    /// Every frame transitively caused by `id`, in creation order.
    pub fn descendants(&self, id: FrameId) -> Vec<FrameId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(f) = stack.pop() {
            if let Some(rec) = self.frames.get(f) {
                for &c in rec.children.iter().rev() {
                    out.push(c);
                    stack.push(c);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Frames delivered to `host`, in delivery order.
    pub fn delivered_to(&self, host: &str) -> Vec<FrameId> {
        let node = format!("host:{host}");
        let mut ids: Vec<_> = self
            .frames
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.terminal
                    .as_ref()
                    .is_some_and(|t| t.action == Action::Deliver && t.node == node)
            })
            .map(|(i, r)| (r.terminal.as_ref().map(|t| t.time), i))
            .collect();
        ids.sort();
        ids.into_iter().map(|(_, i)| i).collect()
    }

    /// Time from arrival at the ALG to departure.
    pub fn latency_of(&self, id: FrameId) -> Result<VirtualTime, SimError> {
        let rec = self.frames.get(id).ok_or(SimError::UnknownFrame(id))?;
        match rec.alg {
            Some(t) if rec.departed => Ok(t.latency()),
            _ => Err(SimError::NotCompleted(id)),
        }
    }

    /// Delivered frames whose causal chain started on another VLAN without
    /// ever passing through the ALG. Empty in a correct simulation.
    pub fn inter_vlan_bypasses(&self) -> Vec<FrameId> {
        let mut out = Vec::new();
        for (id, rec) in self.frames.iter().enumerate() {
            let Some(t) = &rec.terminal else { continue };
            if t.action != Action::Deliver {
                continue;
            }
            let Some(dest) = self.host_index_by_node(&t.node) else { continue };
            let dest_vlan = self.config.hosts[dest].vlan;
            let mut via_alg = false;
            let mut cur = id;
            loop {
                let r = &self.frames[cur];
                via_alg |= r.sender == Sender::Alg;
                match r.caused_by {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            if let Sender::Host(origin) = self.frames[cur].sender {
                if self.config.hosts[origin].vlan != dest_vlan && !via_alg {
                    out.push(id);
                }
            }
        }
        out
    }

    fn host_index_by_node(&self, node: &str) -> Option<usize> {
        let name = node.strip_prefix("host:")?;
        self.config.hosts.iter().position(|h| h.name == name)
    }

    fn host_index(&self, name: &str) -> Result<usize, SimError> {
        self.config
            .hosts
            .iter()
            .position(|h| h.name == name)
            .ok_or_else(|| SimError::UnknownHost(name.to_string()))
    }

    pub fn host_name_of_ip(&self, ip: IpAddr) -> Option<&str> {
        self.config.host_by_ip(ip).map(|h| h.name.as_str())
    }

    fn record(&mut self, time: VirtualTime, id: FrameId, node: &str, action: Action, reason: Option<String>) {
        if action.is_terminal() {
            self.frames[id].terminal = Some(Terminal {
                time,
                node: node.to_string(),
                action,
                reason: reason.clone(),
            });
        }
        if self.trace_enabled {
            self.trace.push(TraceEntry {
                time,
                frame_id: id,
                node: node.to_string(),
                action,
                reason,
                scenario: self.label.clone(),
            });
        }
    }

    fn schedule(&mut self, at: VirtualTime, event: Event) {
        self.seq += 1;
        self.events.push(Reverse((at, self.seq, event)));
    }

    fn new_frame(&mut self, frame: Frame, sender: Sender, caused_by: Option<FrameId>) -> FrameId {
        let id = self.frames.len();
        self.frames.push(FrameRecord {
            frame,
            sender,
            caused_by,
            children: Vec::new(),
            alg: None,
            departed: false,
            terminal: None,
        });
        if let Some(p) = caused_by {
            self.frames[p].children.push(id);
        }
        id
    }

    /// Puts a frame on the wire from `from` at time `at`. The frame is taken
    /// as-is (addresses may be forged); only its ingress VLAN is set, to the
    /// VLAN the sending host is plugged into.
    pub fn inject_frame(&mut self, from: &str, frame: Frame, at: VirtualTime) -> Result<FrameId, SimError> {
        let host = self.host_index(from)?;
        self.inject_from(host, frame, at, None)
    }

    fn inject_from(
        &mut self,
        host: usize,
        mut frame: Frame,
        at: VirtualTime,
        caused_by: Option<FrameId>,
    ) -> Result<FrameId, SimError> {
        if at < self.clock {
            return Err(SimError::TimeInPast { at, clock: self.clock });
        }
        if frame.payload_len() > self.config.mtu {
            return Err(SimError::PayloadTooLarge {
                len: frame.payload_len(),
                mtu: self.config.mtu,
            });
        }
        frame.ingress_vlan = self.config.hosts[host].vlan;
        let id = self.new_frame(frame, Sender::Host(host), caused_by);
        let node = format!("host:{}", self.config.hosts[host].name);
        self.record(at, id, &node, Action::Send, None);
        self.schedule(at, Event::Switch(id));
        Ok(id)
    }

    /// Next-hop MAC as a host sees it: on-link peers (and the ALG's address
    /// on the host's own VLAN) directly, everything else via the ALG.
    fn host_next_hop(&self, host: usize, dst: IpAddr) -> Option<MacAddr> {
        let h = &self.config.hosts[host];
        let subnet = self.config.vlan(h.vlan)?.subnet;
        if !subnet.contains(dst) || self.config.alg_ips().contains(&dst) {
            return Some(self.config.alg.mac);
        }
        self.config
            .hosts
            .iter()
            .find(|p| p.ip == dst && p.vlan == h.vlan)
            .map(|p| p.mac)
    }

    pub fn next_port(&mut self, host: &str) -> Result<u16, SimError> {
        let i = self.host_index(host)?;
        Ok(self.take_host_port(i))
    }

    fn take_host_port(&mut self, host: usize) -> u16 {
        let p = self.next_host_port[host];
        self.next_host_port[host] = if p == u16::MAX { HOST_PORTS_START } else { p + 1 };
        p
    }

    fn host_packet(&self, host: usize, dst: IpAddr, transport: Transport, payload: Vec<u8>) -> Option<Frame> {
        let h = &self.config.hosts[host];
        let dst_mac = self.host_next_hop(host, dst)?;
        Some(Frame::ipv4(
            h.mac,
            dst_mac,
            Ipv4Packet {
                src: h.ip,
                dst,
                transport,
                auth_token: self.policy.spoof_auth.token_for(h.ip).map(str::to_string),
                payload,
            },
        ))
    }

    /// Sends an honest IPv4 packet from `from`: real source addresses, the
    /// host's token when the policy issues one, and next-hop resolution from
    /// the host's configuration.
    pub fn send_ipv4(
        &mut self,
        from: &str,
        dst: IpAddr,
        transport: Transport,
        payload: Vec<u8>,
        at: VirtualTime,
    ) -> Result<FrameId, SimError> {
        let host = self.host_index(from)?;
        match self.host_packet(host, dst, transport, payload.clone()) {
            Some(frame) => self.inject_from(host, frame, at, None),
            None => {
                // no next hop: the frame never leaves the host
                let h = &self.config.hosts[host];
                let frame = Frame::ipv4(
                    h.mac,
                    MacAddr::BROADCAST,
                    Ipv4Packet {
                        src: h.ip,
                        dst,
                        transport,
                        auth_token: None,
                        payload,
                    },
                );
                if at < self.clock {
                    return Err(SimError::TimeInPast { at, clock: self.clock });
                }
                let id = self.new_frame(frame, Sender::Host(host), None);
                let node = format!("host:{from}");
                self.record(at, id, &node, Action::Drop, Some("unresolved-neighbor".into()));
                Ok(id)
            }
        }
    }

    /// Sends a TCP payload from a fresh ephemeral port.
    pub fn send_tcp(
        &mut self,
        from: &str,
        dst: IpAddr,
        dst_port: u16,
        payload: Vec<u8>,
        at: VirtualTime,
    ) -> Result<FrameId, SimError> {
        let src_port = self.next_port(from)?;
        self.send_ipv4(from, dst, Transport::Tcp { src_port, dst_port }, payload, at)
    }

    /// Sends one echo request and runs the network until idle.
    pub fn icmp_probe(&mut self, from: &str, dst: IpAddr) -> Result<Reachability, SimError> {
        let host = self.host_index(from)?;
        let at = self.clock;
        if self.config.hosts[host].ip == dst {
            let frame = self
                .host_packet(host, dst, Transport::Icmp { kind: IcmpKind::EchoRequest }, Vec::new())
                .expect("a host can always address itself via the ALG");
            let id = self.new_frame(frame, Sender::Host(host), None);
            let node = format!("host:{from}");
            self.record(at, id, &node, Action::Send, None);
            self.record(at, id, &node, Action::Loopback, None);
            return Ok(Reachability::Reply);
        }
        let id = self.send_ipv4(
            from,
            dst,
            Transport::Icmp { kind: IcmpKind::EchoRequest },
            Vec::new(),
            at,
        )?;
        self.run_until_idle()?;
        let node = format!("host:{from}");
        let mut chain = vec![id];
        chain.extend(self.descendants(id));
        let replied = chain.iter().any(|&f| {
            let rec = &self.frames[f];
            matches!(
                rec.frame.as_ipv4().map(|p| p.transport),
                Some(Transport::Icmp { kind: IcmpKind::EchoReply })
            ) && rec
                .terminal
                .as_ref()
                .is_some_and(|t| t.action == Action::Deliver && t.node == node)
        });
        if replied {
            return Ok(Reachability::Reply);
        }
        let dropped = chain.iter().find_map(|&f| {
            self.frames[f]
                .terminal
                .as_ref()
                .filter(|t| t.action == Action::Drop)
        });
        Ok(match dropped {
            Some(t) => Reachability::Dropped {
                reason: t.reason.clone().unwrap_or_default(),
                drop_point: t.node.clone(),
            },
            None => Reachability::Dropped {
                reason: "no-reply".into(),
                drop_point: node,
            },
        })
    }

    /// Processes events until the queue is empty.
    pub fn run_until_idle(&mut self) -> Result<(), SimError> {
        let mut processed = 0u64;
        while let Some(Reverse((at, _, event))) = self.events.pop() {
            processed += 1;
            if processed > EVENT_CAP {
                return Err(SimError::SimOverrun(EVENT_CAP));
            }
            debug_assert!(at >= self.clock);
            self.clock = at;
            match event {
                Event::Switch(id) => self.on_switch(id),
                Event::AlgArrive(id) => self.on_alg_arrive(id),
                Event::AlgDepart(id) => self.on_alg_depart(id),
                Event::HostReceive(host, id) => self.on_host_receive(host, id),
            }
        }
        Ok(())
    }

    fn on_switch(&mut self, id: FrameId) {
        let now = self.clock;
        let frame = &self.frames[id].frame;
        let vlan = frame.ingress_vlan;
        let node = format!("switch:{vlan}");
        let dst = frame.dst_mac;
        if dst == self.config.alg.mac || (dst.is_broadcast() && frame.as_arp().is_some()) {
            self.record(now, id, &node, Action::Switch, None);
            self.schedule(now, Event::AlgArrive(id));
            return;
        }
        if let Some(h) = self
            .config
            .hosts
            .iter()
            .position(|h| h.mac == dst && h.vlan == vlan)
        {
            self.record(now, id, &node, Action::Switch, None);
            self.schedule(now, Event::HostReceive(h, id));
            return;
        }
        let reason = if self.config.hosts.iter().any(|h| h.mac == dst) {
            "cross-vlan"
        } else {
            "unknown-destination"
        };
        self.record(now, id, &node, Action::Drop, Some(reason.into()));
    }

    fn on_host_receive(&mut self, host: usize, id: FrameId) {
        let now = self.clock;
        let h = self.config.hosts[host].clone();
        let node = format!("host:{}", h.name);
        let Some(packet) = self.frames[id].frame.as_ipv4().cloned() else {
            self.record(now, id, &node, Action::Deliver, None);
            return;
        };
        if packet.dst != h.ip {
            self.record(now, id, &node, Action::Drop, Some("not-addressed-to-host".into()));
            return;
        }
        self.record(now, id, &node, Action::Deliver, None);

        let reply = match packet.transport {
            Transport::Icmp { kind: IcmpKind::EchoRequest } => {
                Some((Transport::Icmp { kind: IcmpKind::EchoReply }, Vec::new()))
            }
            Transport::Tcp { dst_port, .. }
                if dst_port == Service::Http.port() && h.services.contains(&Service::Http) =>
            {
                Some((packet.transport.reversed(), http_server_reply(&packet.payload)))
            }
            Transport::Tcp { dst_port, .. }
                if dst_port == Service::Ftp.port() && h.services.contains(&Service::Ftp) =>
            {
                Some((packet.transport.reversed(), ftp_server_reply(&packet.payload)))
            }
            _ => None,
        };
        if let Some((transport, payload)) = reply {
            match self.host_packet(host, packet.src, transport, payload) {
                Some(frame) => {
                    // inject_from cannot fail here: now == clock and replies are small
                    let _ = self.inject_from(host, frame, now, Some(id));
                }
                None => {
                    let frame = self.frames[id].frame.clone();
                    let rid = self.new_frame(frame, Sender::Host(host), Some(id));
                    self.record(now, rid, &node, Action::Drop, Some("unresolved-neighbor".into()));
                }
            }
        }
    }

    fn on_alg_arrive(&mut self, id: FrameId) {
        let now = self.clock;
        if let Some(relay) = self.proxy_relay(id) {
            self.frames[id].alg = Some(AlgTiming {
                arrival: now,
                start: now,
                departure: now,
                steps: 0,
            });
            self.frames[id].departed = true;
            self.record(now, id, ALG_NODE, Action::Relay, None);
            self.emit(relay, id, now);
            return;
        }
        self.frames[id].alg = Some(AlgTiming {
            arrival: now,
            start: now,
            departure: now,
            steps: 0,
        });
        self.record(now, id, ALG_NODE, Action::Enqueue, None);
        self.alg.queue.push_back(id);
        if self.alg.in_service.is_none() {
            self.start_service();
        }
    }

    fn start_service(&mut self) {
        let Some(id) = self.alg.queue.pop_front() else { return };
        let now = self.clock;
        let arrival = self.frames[id].alg.map_or(now, |t| t.arrival);
        let (service, steps) = self.service_frame(id, arrival);
        let len = self.frames[id].frame.payload_len() as f64;
        let cost_ns = self.alg.base_ns + self.alg.per_byte_ns * len + self.alg.per_step_ns * steps as f64;
        let departure = now + VirtualTime(cost_ns.round() as u64);
        self.frames[id].alg = Some(AlgTiming {
            arrival,
            start: now,
            departure,
            steps,
        });
        self.alg.in_service = Some((id, service));
        self.schedule(departure, Event::AlgDepart(id));
    }

    fn on_alg_depart(&mut self, id: FrameId) {
        let now = self.clock;
        let Some((sid, service)) = self.alg.in_service.take() else { return };
        debug_assert_eq!(sid, id);
        self.frames[id].departed = true;
        let Service_ {
            outputs,
            action,
            reason,
        } = service;
        self.record(now, id, ALG_NODE, action, reason);
        for frame in outputs {
            self.emit(frame, id, now);
        }
        self.start_service();
    }

    /// Sends an ALG-originated frame into the switch of the VLAN that owns
    /// its destination address.
    fn emit(&mut self, mut frame: Frame, parent: FrameId, now: VirtualTime) {
        let vlan = match &frame.body {
            FrameBody::Ipv4(p) => self.config.vlan_of_ip(p.dst),
            FrameBody::Arp(a) => self.config.vlan_of_ip(a.target_ip),
        };
        frame.ingress_vlan = vlan.unwrap_or(VlanId(0));
        let id = self.new_frame(frame, Sender::Alg, Some(parent));
        self.record(now, id, ALG_NODE, Action::Send, None);
        self.schedule(now, Event::Switch(id));
    }

    fn proxy_relay(&mut self, id: FrameId) -> Option<Frame> {
        let packet = self.frames[id].frame.as_ipv4()?;
        let Transport::Tcp { src_port, dst_port } = packet.transport else {
            return None;
        };
        let entry = self.alg.proxy.get(&dst_port)?;
        if packet.src != entry.server_ip
            || src_port != entry.server_port
            || !self.config.alg_ips().contains(&packet.dst)
        {
            return None;
        }
        let entry = self.alg.proxy.remove(&dst_port)?;
        let client_mac = self.alg.arp.lookup(entry.client_ip)?;
        Some(Frame::ipv4(
            self.config.alg.mac,
            client_mac,
            Ipv4Packet {
                src: entry.front_ip,
                dst: entry.client_ip,
                transport: Transport::Tcp {
                    src_port: entry.front_port,
                    dst_port: entry.client_port,
                },
                auth_token: None,
                payload: packet.payload.clone(),
            },
        ))
    }

    fn take_proxy_port(&mut self) -> u16 {
        loop {
            let p = self.alg.next_proxy_port;
            self.alg.next_proxy_port = if p == *PROXY_PORTS.end() {
                *PROXY_PORTS.start()
            } else {
                p + 1
            };
            if !self.alg.proxy.contains_key(&p) {
                return p;
            }
        }
    }

    /// Re-addresses `packet` for delivery by the ALG, looking the next hop
    /// up in the static ARP table only.
    fn alg_frame(&self, packet: Ipv4Packet) -> Result<Frame, &'static str> {
        if self.config.vlan_of_ip(packet.dst).is_none() {
            return Err("no-route");
        }
        let mac = self.alg.arp.lookup(packet.dst).ok_or("no-arp-entry")?;
        Ok(Frame::ipv4(self.config.alg.mac, mac, packet))
    }

    /// Decides what the ALG does with frame `id`. Pure with respect to the
    /// event queue; effects are applied at departure.
    fn service_frame(&mut self, id: FrameId, arrival: VirtualTime) -> (Service_, u64) {
        let frame = self.frames[id].frame.clone();
        let drop = |reason: String| Service_ {
            outputs: Vec::new(),
            action: Action::Drop,
            reason: Some(reason),
        };

        if let Some(msg) = frame.as_arp() {
            return (self.service_arp(msg, arrival), 0);
        }
        let packet = frame.as_ipv4().expect("non-ARP frames are IPv4").clone();
        let alg_ips = self.config.alg_ips();
        let local = alg_ips.contains(&packet.dst);
        let decision = decide_l3(&self.policy, &frame, local, self.alg.bucket.as_mut(), arrival);

        match decision {
            Decision::Deny { reason, .. } => (drop(reason.as_str().to_string()), 0),
            Decision::Allow if local => match packet.transport {
                Transport::Icmp { kind: IcmpKind::EchoRequest } => {
                    let reply = Ipv4Packet {
                        src: packet.dst,
                        dst: packet.src,
                        transport: Transport::Icmp { kind: IcmpKind::EchoReply },
                        auth_token: None,
                        payload: packet.payload.clone(),
                    };
                    match self.alg_frame(reply) {
                        Ok(f) => (
                            Service_ {
                                outputs: vec![f],
                                action: Action::Consume,
                                reason: Some("echo".into()),
                            },
                            0,
                        ),
                        Err(r) => (drop(r.into()), 0),
                    }
                }
                _ => (
                    Service_ {
                        outputs: Vec::new(),
                        action: Action::Consume,
                        reason: None,
                    },
                    0,
                ),
            },
            Decision::Allow => match self.alg_frame(packet) {
                Ok(f) => (forwarded(vec![f], "forward"), 0),
                Err(r) => (drop(r.into()), 0),
            },
            Decision::ForwardToInspector(Inspector::Http) => self.service_http(&packet),
            Decision::ForwardToInspector(Inspector::Ftp) => self.service_ftp(&packet),
        }
    }

    fn service_arp(&mut self, msg: &ArpMessage, at: VirtualTime) -> Service_ {
        let outcome = handle_arp(&self.alg.arp, msg, &self.config.alg_ips(), self.config.alg.mac);
        let reason = match &outcome.event {
            ArpEvent::BindingConfirmed { .. } => "arp-binding-confirmed",
            ArpEvent::PoisonAttemptRejected { .. } => "arp-poison-rejected",
            ArpEvent::UnknownSenderIgnored { .. } => "arp-unknown-sender",
        };
        self.alg.arp_events.push((at, outcome.event));
        let outputs = outcome
            .reply
            .map(|r| Frame::arp(self.config.alg.mac, r.target_mac, r))
            .into_iter()
            .collect();
        Service_ {
            outputs,
            action: Action::Consume,
            reason: Some(reason.into()),
        }
    }

    fn service_http(&mut self, packet: &Ipv4Packet) -> (Service_, u64) {
        let Transport::Tcp {
            src_port: client_port,
            dst_port: front_port,
        } = packet.transport
        else {
            unreachable!("HTTP inspection is only dispatched for TCP");
        };
        let inspection = dpi::inspect_http(&self.policy, &packet.payload, front_port, packet.src);
        let mut outputs = Vec::new();
        let mut forwarded_any = false;
        let mut failures = Vec::new();
        for outcome in inspection.outcomes {
            match outcome {
                HttpOutcome::Forward {
                    dest_ip,
                    dest_port,
                    request,
                } => {
                    let Some(vlan) = self.config.vlan_of_ip(dest_ip) else {
                        failures.push("no-route");
                        continue;
                    };
                    let Some(back_ip) = self.config.alg_ip_on(vlan) else {
                        failures.push("no-route");
                        continue;
                    };
                    let port = self.take_proxy_port();
                    let fwd = Ipv4Packet {
                        src: back_ip,
                        dst: dest_ip,
                        transport: Transport::Tcp {
                            src_port: port,
                            dst_port: dest_port,
                        },
                        auth_token: None,
                        payload: request.to_bytes(),
                    };
                    match self.alg_frame(fwd) {
                        Ok(f) => {
                            self.alg.proxy.insert(
                                port,
                                ProxyEntry {
                                    client_ip: packet.src,
                                    client_port,
                                    front_ip: packet.dst,
                                    front_port,
                                    server_ip: dest_ip,
                                    server_port: dest_port,
                                },
                            );
                            forwarded_any = true;
                            outputs.push(f);
                        }
                        Err(r) => failures.push(r),
                    }
                }
                HttpOutcome::Respond(resp) => {
                    let back = Ipv4Packet {
                        src: packet.dst,
                        dst: packet.src,
                        transport: packet.transport.reversed(),
                        auth_token: None,
                        payload: resp.to_bytes(),
                    };
                    match self.alg_frame(back) {
                        Ok(f) => outputs.push(f),
                        Err(r) => failures.push(r),
                    }
                }
            }
        }
        let steps = inspection.steps;
        let mut notes = inspection.notes;
        notes.extend(failures.into_iter().map(String::from));
        let reason = (!notes.is_empty()).then(|| notes.join("; "));
        let service = if forwarded_any {
            Service_ {
                outputs,
                action: Action::Consume,
                reason: Some(reason.unwrap_or_else(|| "proxied".into())),
            }
        } else {
            Service_ {
                outputs,
                action: Action::Drop,
                reason: Some(reason.unwrap_or_else(|| "http-rejected".into())),
            }
        };
        (service, steps)
    }

    fn service_ftp(&mut self, packet: &Ipv4Packet) -> (Service_, u64) {
        let to_server = packet
            .transport
            .ports()
            .is_some_and(|(_, dst)| self.policy.ftp_ports.contains(&dst));
        let direction = if to_server {
            FtpDirection::ToServer
        } else {
            FtpDirection::ToClient
        };
        let inspection = dpi::inspect_ftp(&self.policy, &packet.payload, direction);
        let steps = inspection.steps;
        let service = match inspection.action {
            FtpAction::Forward => match self.alg_frame(packet.clone()) {
                Ok(f) => forwarded(vec![f], "forward"),
                Err(r) => Service_ {
                    outputs: Vec::new(),
                    action: Action::Drop,
                    reason: Some(r.into()),
                },
            },
            FtpAction::Reply(reply) => {
                let text = format!("ftp-{} {}", reply.code, reply.text);
                let answer = if to_server {
                    Ipv4Packet {
                        src: packet.dst,
                        dst: packet.src,
                        transport: packet.transport.reversed(),
                        auth_token: None,
                        payload: reply.encode(),
                    }
                } else {
                    Ipv4Packet {
                        payload: reply.encode(),
                        auth_token: None,
                        ..packet.clone()
                    }
                };
                Service_ {
                    outputs: self.alg_frame(answer).into_iter().collect(),
                    action: Action::Drop,
                    reason: Some(text),
                }
            }
        };
        (service, steps)
    }
}

fn forwarded(outputs: Vec<Frame>, reason: &str) -> Service_ {
    Service_ {
        outputs,
        action: Action::Consume,
        reason: Some(reason.into()),
    }
}

/// The servers accept everything they are handed and say so.
fn http_server_reply(payload: &[u8]) -> Vec<u8> {
    let resp = match parse_http_request(payload) {
        Ok(req) => {
            let body = format!("stored {} bytes", req.body.len());
            let mut resp = HttpMessage::response(200, "OK")
                .with_header("Content-Length", &body.len().to_string())
                .with_body(body.into_bytes());
            if let Some(id) = req.header(dpi::http::FUZZ_ID_HEADER) {
                resp = resp.with_header(dpi::http::FUZZ_ID_HEADER, id);
            }
            resp
        }
        Err(_) => HttpMessage::response(400, "Bad Request").with_header("Content-Length", "0"),
    };
    resp.to_bytes()
}

fn ftp_server_reply(payload: &[u8]) -> Vec<u8> {
    let msg = FtpMessage::decode(payload);
    let reply = match msg.command() {
        Err(_) => FtpReply::new(500, "syntax error"),
        Ok(cmd) => match cmd.verb.as_str() {
            "MKD" => FtpReply::new(257, &format!("\"{}\" created", cmd.argument)),
            "USER" => FtpReply::new(331, "password required"),
            "RETR" => {
                let mut r = FtpReply::new(150, "sending");
                r.data = format!("contents of {}", cmd.argument).into_bytes();
                r
            }
            v if UPLOAD_VERBS.contains(&v) => FtpReply::new(226, "transfer complete"),
            _ => FtpReply::new(200, "ok"),
        },
    };
    reply.encode()
}

/// Crafts an ARP message frame as an attacker would, with arbitrary sender
/// fields.
pub fn arp_frame(op: ArpOp, src_mac: MacAddr, sender_ip: IpAddr, target_ip: IpAddr) -> Frame {
    Frame::arp(
        src_mac,
        MacAddr::BROADCAST,
        ArpMessage {
            op,
            sender_ip,
            sender_mac: src_mac,
            target_ip,
            target_mac: MacAddr::default(),
        },
    )
}

#[cfg(test)]
mod tests;
