//! Decoded packet-header facts and the home-network boundary that gives them a
//! direction.

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};

/// TCP control bits as they appear in the low six bits of the flag byte.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);

    pub const EMPTY: TcpFlags = TcpFlags(0);
    const MASK: u8 = 0x3f;

    /// Keeps only the six classic control bits; ECE/CWR/NS are ignored.
    pub const fn from_bits(bits: u8) -> Self {
        TcpFlags(bits & Self::MASK)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for TcpFlags {
    fn bitor_assign(&mut self, rhs: TcpFlags) {
        self.0 |= rhs.0;
    }
}

impl fmt::Debug for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [(TcpFlags, &str); 6] = [
            (TcpFlags::URG, "URG"),
            (TcpFlags::ACK, "ACK"),
            (TcpFlags::PSH, "PSH"),
            (TcpFlags::RST, "RST"),
            (TcpFlags::SYN, "SYN"),
            (TcpFlags::FIN, "FIN"),
        ];
        let set: Vec<&str> = NAMES.iter().filter(|(flag, _)| self.contains(*flag)).map(|(_, name)| *name).collect();
        write!(f, "{{{}}}", set.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Protocol {
    Tcp,
    IcmpEcho,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Tcp => "TCP",
            Protocol::IcmpEcho => "ICMP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    Incoming,
    Outgoing,
    Transit,
}

/// Which endpoints of a packet sit inside the home network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Locality {
    /// outside → home
    Inbound,
    /// home → outside
    Outbound,
    /// home → home
    Internal,
    /// outside → outside
    Transit,
}

impl Locality {
    pub fn direction(self) -> Direction {
        match self {
            Locality::Inbound | Locality::Internal => Direction::Incoming,
            Locality::Outbound => Direction::Outgoing,
            Locality::Transit => Direction::Transit,
        }
    }
}

/// The configured set of CIDR blocks that count as "ours".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomeNetworks(Vec<IpNet>);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HomeNetworkError {
    #[error("home network list is empty")]
    Empty,
    #[error("invalid CIDR block {0:?}")]
    BadCidr(String),
}

impl HomeNetworks {
    pub fn new(nets: Vec<IpNet>) -> Result<Self, HomeNetworkError> {
        if nets.is_empty() {
            return Err(HomeNetworkError::Empty);
        }
        Ok(HomeNetworks(nets))
    }

    /// Parses a list of CIDR strings. A bare address is taken as a host route.
    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self, HomeNetworkError> {
        let nets = items
            .iter()
            .map(|s| {
                let s = s.as_ref().trim();
                IpNet::from_str(s)
                    .or_else(|_| IpAddr::from_str(s).map(IpNet::from))
                    .map_err(|_| HomeNetworkError::BadCidr(s.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(nets)
    }

    pub fn contains(&self, addr: &IpAddr) -> bool {
        self.0.iter().any(|net| net.contains(addr))
    }

    pub fn networks(&self) -> &[IpNet] {
        &self.0
    }

    pub fn locality(&self, src: &IpAddr, dst: &IpAddr) -> Locality {
        match (self.contains(src), self.contains(dst)) {
            (false, true) => Locality::Inbound,
            (true, false) => Locality::Outbound,
            (true, true) => Locality::Internal,
            (false, false) => Locality::Transit,
        }
    }
}

/// Direction of a packet relative to the home networks. Traffic between two
/// home hosts is reported as incoming so the destination-side counters still
/// see intra-network activity.
pub fn classify_direction(src: &IpAddr, dst: &IpAddr, home: &HomeNetworks) -> Direction {
    home.locality(src, dst).direction()
}

/// Header facts of one admitted frame. Construct with [`PacketSummary::tcp`]
/// or [`PacketSummary::icmp_echo`] so the protocol invariants hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketSummary {
    timestamp_us: u64,
    src_ip: IpAddr,
    dst_ip: IpAddr,
    protocol: Protocol,
    ports: Option<(u16, u16)>,
    flags: TcpFlags,
    locality: Locality,
}

impl PacketSummary {
    pub fn tcp(
        timestamp_us: u64,
        src: (IpAddr, u16),
        dst: (IpAddr, u16),
        flags: TcpFlags,
        home: &HomeNetworks,
    ) -> Self {
        PacketSummary {
            timestamp_us,
            src_ip: src.0,
            dst_ip: dst.0,
            protocol: Protocol::Tcp,
            ports: Some((src.1, dst.1)),
            flags,
            locality: home.locality(&src.0, &dst.0),
        }
    }

    pub fn icmp_echo(timestamp_us: u64, src: IpAddr, dst: IpAddr, home: &HomeNetworks) -> Self {
        PacketSummary {
            timestamp_us,
            src_ip: src,
            dst_ip: dst,
            protocol: Protocol::IcmpEcho,
            ports: None,
            flags: TcpFlags::EMPTY,
            locality: home.locality(&src, &dst),
        }
    }

    pub fn timestamp_us(&self) -> u64 {
        self.timestamp_us
    }

    pub fn src_ip(&self) -> IpAddr {
        self.src_ip
    }

    pub fn dst_ip(&self) -> IpAddr {
        self.dst_ip
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn src_port(&self) -> Option<u16> {
        self.ports.map(|p| p.0)
    }

    pub fn dst_port(&self) -> Option<u16> {
        self.ports.map(|p| p.1)
    }

    pub fn flags(&self) -> TcpFlags {
        self.flags
    }

    pub fn is_land(&self) -> bool {
        self.src_ip == self.dst_ip
    }

    pub fn locality(&self) -> Locality {
        self.locality
    }

    pub fn direction(&self) -> Direction {
        self.locality.direction()
    }

    pub fn with_timestamp(mut self, timestamp_us: u64) -> Self {
        self.timestamp_us = timestamp_us;
        self
    }

    /// Re-derives locality against another home-network set.
    pub fn rehome(&mut self, home: &HomeNetworks) {
        self.locality = home.locality(&self.src_ip, &self.dst_ip);
    }
}
