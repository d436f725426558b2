use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::{from_json, ConfigError};
use crate::packet::{IpAddr, MacAddr, VlanId};

pub const DEFAULT_MTU: usize = 65535;

/// An IPv4 prefix in `a.b.c.d/len` form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subnet {
    pub network: IpAddr,
    pub prefix: u8,
}

impl Subnet {
    fn mask(&self) -> u32 {
        if self.prefix == 0 {
            0
        } else {
            u32::MAX << (32 - u32::from(self.prefix))
        }
    }

    pub fn contains(&self, ip: IpAddr) -> bool {
        u32::from(ip) & self.mask() == u32::from(self.network) & self.mask()
    }
}

impl fmt::Display for Subnet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network, self.prefix)
    }
}

impl FromStr for Subnet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| format!("subnet {s:?} lacks a /prefix"))?;
        let network: IpAddr = addr.parse().map_err(|_| format!("bad address in {s:?}"))?;
        let prefix: u8 = len.parse().map_err(|_| format!("bad prefix in {s:?}"))?;
        if prefix > 32 {
            return Err(format!("prefix {prefix} is longer than 32"));
        }
        let subnet = Subnet { network, prefix };
        if u32::from(network) & !subnet.mask() != 0 {
            return Err(format!("{s:?} has host bits set"));
        }
        Ok(subnet)
    }
}

impl Serialize for Subnet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subnet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VlanConfig {
    pub id: VlanId,
    pub name: String,
    pub subnet: Subnet,
}

/// Application servers a host runs. HTTP listens on 80, FTP on 21.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    Http,
    Ftp,
}

impl Service {
    pub fn port(self) -> u16 {
        match self {
            Service::Http => 80,
            Service::Ftp => 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfig {
    pub name: String,
    pub ip: IpAddr,
    pub mac: MacAddr,
    pub vlan: VlanId,
    #[serde(default)]
    pub services: BTreeSet<Service>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgInterface {
    pub vlan: VlanId,
    pub ip: IpAddr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgConfig {
    pub mac: MacAddr,
    pub interfaces: Vec<AlgInterface>,
    pub base_service_cost_ms: f64,
    #[serde(default)]
    pub per_byte_cost_ms: f64,
    #[serde(default)]
    pub regex_step_cost_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub vlans: Vec<VlanConfig>,
    pub hosts: Vec<HostConfig>,
    pub alg: AlgConfig,
    #[serde(default = "default_mtu")]
    pub mtu: usize,
}

fn default_mtu() -> usize {
    DEFAULT_MTU
}

fn host_mac(ip: [u8; 4]) -> MacAddr {
    MacAddr([0x02, 0x00, ip[0], ip[1], ip[2], ip[3]])
}

fn host(name: &str, ip: [u8; 4], vlan: u16, services: &[Service]) -> HostConfig {
    HostConfig {
        name: name.to_string(),
        ip: IpAddr::from(ip),
        mac: host_mac(ip),
        vlan: VlanId(vlan),
        services: services.iter().copied().collect(),
    }
}

impl NetworkConfig {
    /// Control VLAN 10.10.10.0/24 with the three clients, multimedia VLAN
    /// 10.10.20.0/24 with the DOC server and the FTP + MPEG server, and the
    /// ALG's own VLAN 10.10.11.0/24. The ALG is `.1` on each.
    pub fn baseline_topology() -> Self {
        let vlan = |id: u16, name: &str, net: [u8; 4]| VlanConfig {
            id: VlanId(id),
            name: name.to_string(),
            subnet: Subnet {
                network: IpAddr::from(net),
                prefix: 24,
            },
        };
        NetworkConfig {
            vlans: vec![
                vlan(10, "control", [10, 10, 10, 0]),
                vlan(20, "multimedia", [10, 10, 20, 0]),
                vlan(11, "alg", [10, 10, 11, 0]),
            ],
            hosts: vec![
                host("ftp-client", [10, 10, 10, 2], 10, &[]),
                host("mpeg-client", [10, 10, 10, 3], 10, &[]),
                host("doc-client", [10, 10, 10, 4], 10, &[]),
                host("doc-server", [10, 10, 20, 3], 20, &[Service::Http]),
                host("ftp-mpeg-server", [10, 10, 20, 5], 20, &[Service::Http, Service::Ftp]),
            ],
            alg: AlgConfig {
                mac: MacAddr([0x02, 0x00, 10, 10, 11, 1]),
                interfaces: vec![
                    AlgInterface {
                        vlan: VlanId(10),
                        ip: IpAddr::new(10, 10, 10, 1),
                    },
                    AlgInterface {
                        vlan: VlanId(20),
                        ip: IpAddr::new(10, 10, 20, 1),
                    },
                    AlgInterface {
                        vlan: VlanId(11),
                        ip: IpAddr::new(10, 10, 11, 1),
                    },
                ],
                base_service_cost_ms: 39.0,
                per_byte_cost_ms: 0.0,
                regex_step_cost_ms: 0.0001,
            },
            mtu: DEFAULT_MTU,
        }
    }

    /// The baseline topology plus the attacker host used by the spoofing and
    /// ARP scenarios, sitting in the multimedia VLAN.
    pub fn testbed() -> Self {
        let mut cfg = Self::baseline_topology();
        cfg.hosts.push(host("spoof", [10, 10, 20, 66], 20, &[]));
        cfg
    }

    pub fn host(&self, name: &str) -> Option<&HostConfig> {
        self.hosts.iter().find(|h| h.name == name)
    }

    pub fn host_by_ip(&self, ip: IpAddr) -> Option<&HostConfig> {
        self.hosts.iter().find(|h| h.ip == ip)
    }

    pub fn vlan(&self, id: VlanId) -> Option<&VlanConfig> {
        self.vlans.iter().find(|v| v.id == id)
    }

    pub fn vlan_of_ip(&self, ip: IpAddr) -> Option<VlanId> {
        self.vlans.iter().find(|v| v.subnet.contains(ip)).map(|v| v.id)
    }

    pub fn alg_ips(&self) -> Vec<IpAddr> {
        self.alg.interfaces.iter().map(|i| i.ip).collect()
    }

    pub fn alg_ip_on(&self, vlan: VlanId) -> Option<IpAddr> {
        self.alg
            .interfaces
            .iter()
            .find(|i| i.vlan == vlan)
            .map(|i| i.ip)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut ids = BTreeSet::new();
        for (i, v) in self.vlans.iter().enumerate() {
            if !ids.insert(v.id) {
                return Err(ConfigError::at(format!("/vlans/{i}/id"), format!("duplicate VLAN {}", v.id.0)));
            }
        }
        for (i, a) in self.vlans.iter().enumerate() {
            for b in &self.vlans[..i] {
                if a.subnet.contains(b.subnet.network) || b.subnet.contains(a.subnet.network) {
                    return Err(ConfigError::at(
                        format!("/vlans/{i}/subnet"),
                        format!("{} overlaps {}", a.subnet, b.subnet),
                    ));
                }
            }
        }

        let mut ips = BTreeSet::new();
        let mut macs = BTreeSet::from([self.alg.mac]);
        let mut names = BTreeSet::new();
        for (i, h) in self.hosts.iter().enumerate() {
            let at = |field: &str| format!("/hosts/{i}/{field}");
            if !names.insert(h.name.as_str()) {
                return Err(ConfigError::at(at("name"), format!("duplicate host name {:?}", h.name)));
            }
            if !ips.insert(h.ip) {
                return Err(ConfigError::at(at("ip"), format!("duplicate host IP {}", h.ip)));
            }
            if !macs.insert(h.mac) || h.mac.is_broadcast() {
                return Err(ConfigError::at(at("mac"), format!("MAC {} is not unique", h.mac)));
            }
            let vlan = self
                .vlan(h.vlan)
                .ok_or_else(|| ConfigError::at(at("vlan"), format!("unknown VLAN {}", h.vlan.0)))?;
            if !vlan.subnet.contains(h.ip) {
                return Err(ConfigError::at(
                    at("ip"),
                    format!("{} is outside {} ({})", h.ip, vlan.name, vlan.subnet),
                ));
            }
        }

        for (i, v) in self.vlans.iter().enumerate() {
            if self.alg_ip_on(v.id).is_none() {
                return Err(ConfigError::at(
                    format!("/vlans/{i}"),
                    format!("ALG has no interface on VLAN {}", v.id.0),
                ));
            }
        }
        for (i, iface) in self.alg.interfaces.iter().enumerate() {
            let at = |field: &str| format!("/alg/interfaces/{i}/{field}");
            let vlan = self.vlan(iface.vlan).ok_or_else(|| {
                ConfigError::at(at("vlan"), format!("unknown VLAN {}", iface.vlan.0))
            })?;
            if !vlan.subnet.contains(iface.ip) {
                return Err(ConfigError::at(at("ip"), format!("{} is outside {}", iface.ip, vlan.subnet)));
            }
            if !ips.insert(iface.ip) {
                return Err(ConfigError::at(at("ip"), format!("{} is already in use", iface.ip)));
            }
        }

        let costs = [
            ("base_service_cost_ms", self.alg.base_service_cost_ms),
            ("per_byte_cost_ms", self.alg.per_byte_cost_ms),
            ("regex_step_cost_ms", self.alg.regex_step_cost_ms),
        ];
        for (name, value) in costs {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ConfigError::at(format!("/alg/{name}"), "cost must be non-negative"));
            }
        }
        if self.mtu == 0 {
            return Err(ConfigError::at("/mtu", "MTU must be positive"));
        }
        Ok(())
    }
}

pub fn load_network(json: &[u8]) -> Result<NetworkConfig, ConfigError> {
    let cfg: NetworkConfig = from_json(json)?;
    cfg.validate()?;
    Ok(cfg)
}
