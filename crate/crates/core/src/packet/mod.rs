//! Simulated wire formats: link-layer frames, ARP, and the application
//! payloads (HTTP, FTP, toy file containers) carried inside them.

mod file;
mod ftp;
mod http;

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use file::{
    detect_file_kind, extract_author, make_doc, make_mpeg, FileKind, DOC_MAGIC, MPEG_MAGIC,
};
pub use ftp::{parse_ftp_command, FtpCommand, FtpMessage, FtpReply, UPLOAD_VERBS};
pub use http::{
    parse_http_request, parse_http_response, serialize_http, HttpMessage, StartLine,
};

/// IPv4 addresses are plain dotted-quad values; the standard library type
/// already gives byte-wise ordering and a lossless text form.
pub type IpAddr = Ipv4Addr;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("missing blank line terminating the header block")]
    MissingHeaderTerminator,
    #[error("malformed start line: {0:?}")]
    StartLine(String),
    #[error("header line without a colon: {0:?}")]
    HeaderLine(String),
    #[error("empty command line")]
    EmptyCommand,
    #[error("command verb must be ASCII letters, got {0:?}")]
    BadVerb(String),
    #[error("invalid MAC address {0:?}")]
    MacAddr(String),
    #[error("message is not valid UTF-8 where text was expected")]
    Utf8,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("not a DOC container")]
    NotDoc,
    #[error("second line lacks the AUTHOR: field")]
    MissingAuthor,
    #[error("author field is not valid UTF-8")]
    Utf8,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xff; 6]);

    pub fn is_broadcast(&self) -> bool {
        *self == Self::BROADCAST
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MacAddr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(|| ParseError::MacAddr(s.into()))?;
            if part.len() != 2 {
                return Err(ParseError::MacAddr(s.into()));
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| ParseError::MacAddr(s.into()))?;
        }
        if parts.next().is_some() {
            return Err(ParseError::MacAddr(s.into()));
        }
        Ok(MacAddr(out))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct VlanId(pub u16);

impl fmt::Display for VlanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vlan{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArpOp {
    Request,
    Reply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArpMessage {
    pub op: ArpOp,
    pub sender_ip: IpAddr,
    pub sender_mac: MacAddr,
    pub target_ip: IpAddr,
    pub target_mac: MacAddr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcmpKind {
    EchoRequest,
    EchoReply,
}

/// Transport layer of an IPv4 packet. ICMP carries no ports, which keeps the
/// "ICMP has no L4 header" rule out of reach of callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "proto")]
pub enum Transport {
    Icmp { kind: IcmpKind },
    Tcp { src_port: u16, dst_port: u16 },
    Udp { src_port: u16, dst_port: u16 },
}

impl Transport {
    pub fn ports(&self) -> Option<(u16, u16)> {
        match *self {
            Transport::Icmp { .. } => None,
            Transport::Tcp { src_port, dst_port } | Transport::Udp { src_port, dst_port } => {
                Some((src_port, dst_port))
            }
        }
    }

    pub fn ip_proto(&self) -> IpProto {
        match self {
            Transport::Icmp { .. } => IpProto::Icmp,
            Transport::Tcp { .. } => IpProto::Tcp,
            Transport::Udp { .. } => IpProto::Udp,
        }
    }

    /// Same protocol with source and destination ports exchanged.
    pub fn reversed(&self) -> Transport {
        match *self {
            Transport::Icmp { kind } => Transport::Icmp { kind },
            Transport::Tcp { src_port, dst_port } => Transport::Tcp {
                src_port: dst_port,
                dst_port: src_port,
            },
            Transport::Udp { src_port, dst_port } => Transport::Udp {
                src_port: dst_port,
                dst_port: src_port,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpProto {
    Icmp,
    Tcp,
    Udp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipv4Packet {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub transport: Transport,
    /// Per-host shared secret carried as an IP option; `None` when the
    /// sender does not authenticate.
    pub auth_token: Option<String>,
    #[serde(with = "bytes_lossy")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FrameBody {
    Arp(ArpMessage),
    Ipv4(Ipv4Packet),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    /// Set by the switch port the frame entered through; whatever the sender
    /// writes here is overwritten on injection.
    pub ingress_vlan: VlanId,
    pub body: FrameBody,
}

impl Frame {
    pub fn ipv4(src_mac: MacAddr, dst_mac: MacAddr, packet: Ipv4Packet) -> Self {
        Frame {
            src_mac,
            dst_mac,
            ingress_vlan: VlanId(0),
            body: FrameBody::Ipv4(packet),
        }
    }

    pub fn arp(src_mac: MacAddr, dst_mac: MacAddr, msg: ArpMessage) -> Self {
        Frame {
            src_mac,
            dst_mac,
            ingress_vlan: VlanId(0),
            body: FrameBody::Arp(msg),
        }
    }

    pub fn as_ipv4(&self) -> Option<&Ipv4Packet> {
        match &self.body {
            FrameBody::Ipv4(p) => Some(p),
            FrameBody::Arp(_) => None,
        }
    }

    pub fn as_arp(&self) -> Option<&ArpMessage> {
        match &self.body {
            FrameBody::Arp(a) => Some(a),
            FrameBody::Ipv4(_) => None,
        }
    }

    pub fn payload_len(&self) -> usize {
        self.as_ipv4().map_or(0, |p| p.payload.len())
    }
}

/// Payloads are mostly text; they go into JSON as lossy UTF-8 so traces stay
/// readable.
mod bytes_lossy {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&String::from_utf8_lossy(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        Ok(String::deserialize(d)?.into_bytes())
    }
}
