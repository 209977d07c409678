//! Per-window traffic flows (5-tuple) and IP flows (host pair + protocol),
//! each holding per-direction packet-type counters.

use std::collections::HashMap;
use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::packet::{Direction, Locality, PacketSummary, Protocol, TcpFlags};

/// Packet classification by exact flag set. The variant order is the column
/// order of the flow logs and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PacketType {
    Syn,
    SynAck,
    Ack,
    Fin,
    FinAck,
    Rst,
    RstAck,
    Psh,
    PshAck,
    Urg,
    Null,
    Xmas,
    Land,
    Other,
    IcmpEcho,
}

impl PacketType {
    pub const COUNT: usize = 15;

    pub const ALL: [PacketType; Self::COUNT] = [
        PacketType::Syn,
        PacketType::SynAck,
        PacketType::Ack,
        PacketType::Fin,
        PacketType::FinAck,
        PacketType::Rst,
        PacketType::RstAck,
        PacketType::Psh,
        PacketType::PshAck,
        PacketType::Urg,
        PacketType::Null,
        PacketType::Xmas,
        PacketType::Land,
        PacketType::Other,
        PacketType::IcmpEcho,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column label used in log headers.
    pub fn label(self) -> &'static str {
        match self {
            PacketType::Syn => "SYN",
            PacketType::SynAck => "SYN_ACK",
            PacketType::Ack => "ACK",
            PacketType::Fin => "FIN",
            PacketType::FinAck => "FIN_ACK",
            PacketType::Rst => "RST",
            PacketType::RstAck => "RST_ACK",
            PacketType::Psh => "PSH",
            PacketType::PshAck => "PSH_ACK",
            PacketType::Urg => "URG",
            PacketType::Null => "NULL",
            PacketType::Xmas => "XMAS",
            PacketType::Land => "LAND",
            PacketType::Other => "OTHER",
            PacketType::IcmpEcho => "ICMP_ECHO",
        }
    }
}

/// Classifies a packet. LAND wins over everything, then exact flag sets;
/// any remaining set containing URG is URG, anything else OTHER.
pub fn packet_type_of(flags: TcpFlags, is_land: bool, protocol: Protocol) -> PacketType {
    if is_land {
        return PacketType::Land;
    }
    if protocol == Protocol::IcmpEcho {
        return PacketType::IcmpEcho;
    }
    const SYN: u8 = TcpFlags::SYN.bits();
    const ACK: u8 = TcpFlags::ACK.bits();
    const FIN: u8 = TcpFlags::FIN.bits();
    const RST: u8 = TcpFlags::RST.bits();
    const PSH: u8 = TcpFlags::PSH.bits();
    const URG: u8 = TcpFlags::URG.bits();
    match flags.bits() {
        0 => PacketType::Null,
        SYN => PacketType::Syn,
        x if x == SYN | ACK => PacketType::SynAck,
        ACK => PacketType::Ack,
        FIN => PacketType::Fin,
        x if x == FIN | ACK => PacketType::FinAck,
        RST => PacketType::Rst,
        x if x == RST | ACK => PacketType::RstAck,
        PSH => PacketType::Psh,
        x if x == PSH | ACK => PacketType::PshAck,
        x if x == URG | PSH | FIN => PacketType::Xmas,
        x if x & URG != 0 => PacketType::Urg,
        _ => PacketType::Other,
    }
}

/// Counter bucket relative to the home side of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bucket {
    In = 0,
    Out = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PacketTypeCounters {
    counts: [[u64; 2]; PacketType::COUNT],
}

impl PacketTypeCounters {
    pub fn get(&self, ty: PacketType, bucket: Bucket) -> u64 {
        self.counts[ty.index()][bucket as usize]
    }

    pub fn set(&mut self, ty: PacketType, bucket: Bucket, value: u64) {
        self.counts[ty.index()][bucket as usize] = value;
    }

    pub fn increment(&mut self, ty: PacketType, bucket: Bucket) {
        self.counts[ty.index()][bucket as usize] += 1;
    }

    pub fn add(&mut self, other: &PacketTypeCounters) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            a[0] += b[0];
            a[1] += b[1];
        }
    }

    pub fn total(&self, bucket: Bucket) -> u64 {
        self.counts.iter().map(|c| c[bucket as usize]).sum()
    }

    /// Values in log column order: for each packet type, in then out.
    pub fn columns(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts.iter().flat_map(|c| c.iter().copied())
    }

    /// Inverse of [`columns`](Self::columns).
    pub fn from_columns(values: &[u64]) -> Option<Self> {
        if values.len() != PacketType::COUNT * 2 {
            return None;
        }
        let mut c = PacketTypeCounters::default();
        for (i, pair) in values.chunks_exact(2).enumerate() {
            c.counts[i] = [pair[0], pair[1]];
        }
        Some(c)
    }

    /// Column labels matching [`columns`](Self::columns).
    pub fn column_labels() -> Vec<String> {
        PacketType::ALL.iter().flat_map(|t| [format!("{}_in", t.label()), format!("{}_out", t.label())]).collect()
    }

    /// Same counters seen from the other endpoint.
    pub fn mirrored(&self) -> Self {
        let mut c = *self;
        for pair in c.counts.iter_mut() {
            pair.swap(0, 1);
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IpFlowKey {
    pub ip_a: IpAddr,
    pub ip_b: IpAddr,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub ip_a: IpAddr,
    pub ip_b: IpAddr,
    pub port_a: u16,
    pub port_b: u16,
    pub protocol: Protocol,
}

impl FlowKey {
    pub fn ip_flow(&self) -> IpFlowKey {
        IpFlowKey { ip_a: self.ip_a, ip_b: self.ip_b, protocol: self.protocol }
    }
}

impl fmt::Display for IpFlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}<->{}", self.protocol, self.ip_a, self.ip_b)
    }
}

/// Canonical keys and counter bucket for one packet.
///
/// `ip_a` is the home-side endpoint when exactly one endpoint is home,
/// otherwise the smaller address.
pub fn orient(pkt: &PacketSummary) -> (FlowKey, Bucket) {
    let src = (pkt.src_ip(), pkt.src_port().unwrap_or(0));
    let dst = (pkt.dst_ip(), pkt.dst_port().unwrap_or(0));
    let (a, b) = match pkt.locality() {
        Locality::Inbound => (dst, src),
        Locality::Outbound => (src, dst),
        Locality::Internal | Locality::Transit => {
            if src <= dst {
                (src, dst)
            } else {
                (dst, src)
            }
        }
    };
    let bucket = match pkt.direction() {
        Direction::Incoming => Bucket::In,
        Direction::Outgoing => Bucket::Out,
        // Relative to the canonical A side.
        Direction::Transit => {
            if dst == a {
                Bucket::In
            } else {
                Bucket::Out
            }
        }
    };
    let key = FlowKey { ip_a: a.0, ip_b: b.0, port_a: a.1, port_b: b.1, protocol: pkt.protocol() };
    (key, bucket)
}

/// Mutable per-window aggregation state.
#[derive(Debug, Clone)]
pub struct WindowState {
    window_index: u64,
    window_period_s: f64,
    start_us: u64,
    traffic_flows: HashMap<FlowKey, PacketTypeCounters>,
    ip_flows: HashMap<IpFlowKey, PacketTypeCounters>,
    packets: u64,
    malformed: u64,
    transit: u64,
}

/// Immutable copy of a finished window, flows in canonical key order.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSnapshot {
    pub window_index: u64,
    pub window_period_s: f64,
    pub start_us: u64,
    pub traffic_flows: Vec<(FlowKey, PacketTypeCounters)>,
    pub ip_flows: Vec<(IpFlowKey, PacketTypeCounters)>,
    pub packets: u64,
    pub malformed: u64,
    pub transit: u64,
}

impl WindowSnapshot {
    pub fn traffic_flow_count(&self) -> u64 {
        self.traffic_flows.len() as u64
    }

    pub fn ip_flow_count(&self) -> u64 {
        self.ip_flows.len() as u64
    }
}

impl WindowState {
    pub fn new(window_index: u64, window_period_s: f64, start_us: u64) -> Self {
        assert!(window_period_s > 0.0, "window period must be positive");
        WindowState {
            window_index,
            window_period_s,
            start_us,
            traffic_flows: HashMap::new(),
            ip_flows: HashMap::new(),
            packets: 0,
            malformed: 0,
            transit: 0,
        }
    }

    pub fn window_index(&self) -> u64 {
        self.window_index
    }

    pub fn window_period_s(&self) -> f64 {
        self.window_period_s
    }

    pub fn start_us(&self) -> u64 {
        self.start_us
    }

    /// First timestamp after this window.
    pub fn end_us(&self) -> u64 {
        self.start_us + period_us(self.window_period_s)
    }

    pub fn traffic_flow_count(&self) -> u64 {
        self.traffic_flows.len() as u64
    }

    pub fn ip_flow_count(&self) -> u64 {
        self.ip_flows.len() as u64
    }

    pub fn packets(&self) -> u64 {
        self.packets
    }

    pub fn record(&mut self, pkt: &PacketSummary) {
        let (key, bucket) = orient(pkt);
        let ty = packet_type_of(pkt.flags(), pkt.is_land(), pkt.protocol());
        self.traffic_flows.entry(key).or_default().increment(ty, bucket);
        self.ip_flows.entry(key.ip_flow()).or_default().increment(ty, bucket);
        self.packets += 1;
        if pkt.direction() == Direction::Transit {
            self.transit += 1;
        }
    }

    pub fn record_malformed(&mut self) {
        self.malformed += 1;
    }

    /// Freezes this window and starts the next one, which begins where this
    /// one ends and runs for `next_period_s`.
    pub fn rotate(self, next_period_s: f64) -> (WindowSnapshot, WindowState) {
        let next = WindowState::new(self.window_index + 1, next_period_s, self.end_us());
        (self.snapshot(), next)
    }

    pub fn snapshot(self) -> WindowSnapshot {
        let mut traffic_flows: Vec<_> = self.traffic_flows.into_iter().collect();
        traffic_flows.sort_unstable_by_key(|f| f.0);
        let mut ip_flows: Vec<_> = self.ip_flows.into_iter().collect();
        ip_flows.sort_unstable_by_key(|f| f.0);
        WindowSnapshot {
            window_index: self.window_index,
            window_period_s: self.window_period_s,
            start_us: self.start_us,
            traffic_flows,
            ip_flows,
            packets: self.packets,
            malformed: self.malformed,
            transit: self.transit,
        }
    }
}

pub fn period_us(period_s: f64) -> u64 {
    (period_s * 1e6).round().max(1.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::HomeNetworks;

    fn home() -> HomeNetworks {
        HomeNetworks::parse(&["10.0.0.0/24"]).unwrap()
    }

    fn tcp(src: &str, sport: u16, dst: &str, dport: u16, flags: TcpFlags) -> PacketSummary {
        PacketSummary::tcp(0, (src.parse().unwrap(), sport), (dst.parse().unwrap(), dport), flags, &home())
    }

    #[test]
    fn classification_examples() {
        use TcpFlags as F;
        let t = |f, land| packet_type_of(f, land, Protocol::Tcp);
        assert_eq!(t(F::URG | F::PSH | F::FIN, false), PacketType::Xmas);
        assert_eq!(t(F::EMPTY, false), PacketType::Null);
        assert_eq!(t(F::SYN, true), PacketType::Land);
        assert_eq!(t(F::SYN | F::ACK, false), PacketType::SynAck);
        assert_eq!(t(F::FIN, false), PacketType::Fin);
        assert_eq!(t(F::FIN | F::ACK, false), PacketType::FinAck);
        assert_eq!(t(F::RST | F::ACK, false), PacketType::RstAck);
        assert_eq!(t(F::PSH | F::ACK, false), PacketType::PshAck);
        assert_eq!(t(F::URG | F::ACK, false), PacketType::Urg);
        assert_eq!(t(F::SYN | F::FIN, false), PacketType::Other);
        assert_eq!(packet_type_of(F::EMPTY, false, Protocol::IcmpEcho), PacketType::IcmpEcho);
    }

    #[test]
    fn classification_is_total_over_flag_space() {
        for bits in 0..64u8 {
            for land in [false, true] {
                let ty = packet_type_of(TcpFlags::from_bits(bits), land, Protocol::Tcp);
                if land {
                    assert_eq!(ty, PacketType::Land);
                } else {
                    assert_ne!(ty, PacketType::Land);
                    assert_ne!(ty, PacketType::IcmpEcho);
                }
            }
        }
    }

    #[test]
    fn first_packet_creates_both_flows() {
        let mut st = WindowState::new(0, 1.0, 0);
        st.record(&tcp("203.0.113.5", 40000, "10.0.0.7", 80, TcpFlags::SYN));
        assert_eq!(st.traffic_flow_count(), 1);
        assert_eq!(st.ip_flow_count(), 1);
        let snap = st.snapshot();
        assert_eq!(snap.traffic_flows[0].1.get(PacketType::Syn, Bucket::In), 1);
        assert_eq!(snap.ip_flows[0].1.get(PacketType::Syn, Bucket::In), 1);
        assert_eq!(snap.ip_flows[0].0.ip_a, "10.0.0.7".parse::<IpAddr>().unwrap());
    }

    #[test]
    fn seven_port_pairs_conflate_to_one_ip_flow() {
        let mut st = WindowState::new(0, 1.0, 0);
        for port in [80, 443, 22, 25, 110, 143, 993] {
            st.record(&tcp("203.0.113.5", 50000, "10.0.0.7", port, TcpFlags::SYN));
        }
        assert_eq!(st.traffic_flow_count(), 7);
        assert_eq!(st.ip_flow_count(), 1);
    }

    #[test]
    fn duplicate_packets_increment() {
        let mut st = WindowState::new(0, 1.0, 0);
        let p = tcp("203.0.113.5", 1, "10.0.0.7", 2, TcpFlags::ACK);
        st.record(&p);
        st.record(&p);
        let snap = st.snapshot();
        assert_eq!(snap.traffic_flows.len(), 1);
        assert_eq!(snap.traffic_flows[0].1.get(PacketType::Ack, Bucket::In), 2);
    }

    #[test]
    fn reply_lands_in_same_flow_other_bucket() {
        let mut st = WindowState::new(0, 1.0, 0);
        st.record(&tcp("203.0.113.5", 40000, "10.0.0.7", 80, TcpFlags::SYN));
        st.record(&tcp("10.0.0.7", 80, "203.0.113.5", 40000, TcpFlags::SYN | TcpFlags::ACK));
        let snap = st.snapshot();
        assert_eq!(snap.traffic_flows.len(), 1);
        let c = snap.traffic_flows[0].1;
        assert_eq!(c.get(PacketType::Syn, Bucket::In), 1);
        assert_eq!(c.get(PacketType::SynAck, Bucket::Out), 1);
        assert_eq!(snap.traffic_flows[0].0.port_a, 80);
    }

    #[test]
    fn transit_is_oriented_by_address_order() {
        let mut st = WindowState::new(0, 1.0, 0);
        st.record(&tcp("198.51.100.9", 1, "198.51.100.2", 2, TcpFlags::SYN));
        let snap = st.snapshot();
        assert_eq!(snap.transit, 1);
        let (key, c) = snap.ip_flows[0];
        assert_eq!(key.ip_a, "198.51.100.2".parse::<IpAddr>().unwrap());
        assert_eq!(c.get(PacketType::Syn, Bucket::In), 1);
    }

    #[test]
    fn rotate_resets_counters() {
        let mut st = WindowState::new(4, 1.0, 1_000_000);
        st.record(&tcp("203.0.113.5", 1, "10.0.0.7", 2, TcpFlags::ACK));
        st.record(&tcp("203.0.113.6", 1, "10.0.0.7", 2, TcpFlags::ACK));
        st.record(&tcp("203.0.113.7", 1, "10.0.0.7", 2, TcpFlags::ACK));
        let (snap, next) = st.rotate(2.0);
        assert_eq!(snap.ip_flows.len(), 3);
        assert_eq!(next.window_index(), 5);
        assert_eq!(next.ip_flow_count(), 0);
        assert_eq!(next.start_us(), 2_000_000);
        assert_eq!(next.end_us(), 4_000_000);
    }

    #[test]
    fn columns_round_trip() {
        let mut c = PacketTypeCounters::default();
        c.set(PacketType::Xmas, Bucket::Out, 9);
        c.set(PacketType::Syn, Bucket::In, 3);
        let cols: Vec<u64> = c.columns().collect();
        assert_eq!(cols[0], 3);
        assert_eq!(PacketTypeCounters::from_columns(&cols), Some(c));
        assert_eq!(PacketTypeCounters::column_labels().len(), cols.len());
    }
}
