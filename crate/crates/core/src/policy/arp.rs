use std::collections::BTreeMap;

use serde::Serialize;

use super::PolicySet;
use crate::packet::{ArpMessage, ArpOp, IpAddr, MacAddr};

/// The ALG's IP-to-MAC table. It only ever holds the policy's static
/// bindings; nothing learned from the wire is written into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArpTable {
    bindings: BTreeMap<IpAddr, MacAddr>,
}

impl ArpTable {
    pub fn from_policy(policy: &PolicySet) -> Self {
        ArpTable {
            bindings: policy.static_arp.clone(),
        }
    }

    pub fn lookup(&self, ip: IpAddr) -> Option<MacAddr> {
        self.bindings.get(&ip).copied()
    }

    pub fn bindings(&self) -> &BTreeMap<IpAddr, MacAddr> {
        &self.bindings
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum ArpEvent {
    /// The message agrees with the static binding for its sender.
    BindingConfirmed { ip: IpAddr },
    /// The message claims a MAC for a statically bound IP that differs from
    /// the binding.
    PoisonAttemptRejected {
        ip: IpAddr,
        claimed_mac: MacAddr,
        bound_mac: MacAddr,
    },
    /// The sender has no static binding; static-only tables never learn.
    UnknownSenderIgnored { ip: IpAddr },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArpOutcome {
    pub event: ArpEvent,
    pub reply: Option<ArpMessage>,
}

/// Processes one ARP message against a static-only table. The table is never
/// modified. A reply is produced only for requests asking for one of the
/// ALG's own addresses, and never for a poisoning attempt.
pub fn handle_arp(
    table: &ArpTable,
    msg: &ArpMessage,
    alg_ips: &[IpAddr],
    alg_mac: MacAddr,
) -> ArpOutcome {
    let event = match table.lookup(msg.sender_ip) {
        Some(bound) if bound != msg.sender_mac => ArpEvent::PoisonAttemptRejected {
            ip: msg.sender_ip,
            claimed_mac: msg.sender_mac,
            bound_mac: bound,
        },
        Some(_) => ArpEvent::BindingConfirmed { ip: msg.sender_ip },
        None => ArpEvent::UnknownSenderIgnored { ip: msg.sender_ip },
    };
    let poisoned = matches!(event, ArpEvent::PoisonAttemptRejected { .. });
    let reply = (msg.op == ArpOp::Request && alg_ips.contains(&msg.target_ip) && !poisoned)
        .then(|| ArpMessage {
            op: ArpOp::Reply,
            sender_ip: msg.target_ip,
            sender_mac: alg_mac,
            target_ip: msg.sender_ip,
            target_mac: msg.sender_mac,
        });
    ArpOutcome { event, reply }
}
