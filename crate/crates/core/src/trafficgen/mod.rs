//! Seeded synthetic traffic: normal sessions and common scan/flood patterns,
//! written as PCAP with a ground-truth label sidecar.

pub mod frame;
mod label;

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use frame::{FrameBuilder, L4};
pub use label::{LabelFile, WindowLabel};

use crate::capture::{write_pcap, RawFrame};
use crate::packet::TcpFlags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioKind {
    Normal,
    Ping,
    SynScan,
    FinScan,
    XmasScan,
    NullScan,
    SynFlood,
    DdosSpoofed,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Normal,
        ScenarioKind::Ping,
        ScenarioKind::SynScan,
        ScenarioKind::FinScan,
        ScenarioKind::XmasScan,
        ScenarioKind::NullScan,
        ScenarioKind::SynFlood,
        ScenarioKind::DdosSpoofed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Normal => "NORMAL",
            ScenarioKind::Ping => "PING",
            ScenarioKind::SynScan => "SYN_SCAN",
            ScenarioKind::FinScan => "FIN_SCAN",
            ScenarioKind::XmasScan => "XMAS_SCAN",
            ScenarioKind::NullScan => "NULL_SCAN",
            ScenarioKind::SynFlood => "SYN_FLOOD",
            ScenarioKind::DdosSpoofed => "DDOS_SPOOFED",
        }
    }

    pub fn is_attack(self) -> bool {
        self != ScenarioKind::Normal
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        let alias = match norm.as_str() {
            "XMAS" => "XMAS_SCAN",
            "NULL" => "NULL_SCAN",
            "FIN" => "FIN_SCAN",
            "DDOS" => "DDOS_SPOOFED",
            other => other,
        };
        ScenarioKind::ALL.into_iter().find(|k| k.name() == alias).ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

/// How a SYN scan treats open ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// SYN, SYN-ACK, then the scanner resets.
    #[default]
    HalfOpen,
    /// Full handshake, then the scanner resets the connection.
    Connect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// Home-side host.
    pub victim: IpAddr,
    /// Remote host (scanner, client, or flood origin).
    pub attacker: IpAddr,
    pub window_period_s: f64,
    /// Traffic in each window is spread over this many seconds.
    pub duration_s: f64,
    pub windows: u32,
    pub start_us: u64,
    /// Ports probed by the scan scenarios.
    pub ports: u32,
    pub open_ratio: f64,
    pub scan_mode: ScanMode,
    /// Packets per window for SYN_FLOOD.
    pub flood_packets: u32,
    pub spoofed_sources: u32,
    /// Sessions per window for NORMAL.
    pub connections: u32,
    /// Echo requests per window for PING.
    pub pings: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("open_ratio {0} outside [0, 1]")]
    OpenRatio(f64),
    #[error("window_period_s must be positive")]
    Period,
    #[error("duration_s must be in (0, window_period_s)")]
    Duration,
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("ports must be at most 65535")]
    Ports,
    #[error("victim and attacker must differ and share an address family")]
    Addresses,
}

impl ScenarioSpec {
    /// Defaults sized so each scenario crosses its stock thresholds within one
    /// window.
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        let ports = match kind {
            ScenarioKind::SynScan => 400,
            _ => 50,
        };
        ScenarioSpec {
            kind,
            seed,
            victim: IpAddr::V4(Ipv4Addr::new(10, 0, 0, 7)),
            attacker: IpAddr::V4(Ipv4Addr::new(203, 0, 113, 5)),
            window_period_s: 1.0,
            duration_s: 0.8,
            windows: 1,
            start_us: 1_700_000_000_000_000,
            ports,
            open_ratio: 0.02,
            scan_mode: ScanMode::HalfOpen,
            flood_packets: 5000,
            spoofed_sources: 800,
            connections: 20,
            pings: 4,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if !(0.0..=1.0).contains(&self.open_ratio) {
            return Err(SpecError::OpenRatio(self.open_ratio));
        }
        if self.window_period_s.is_nan() || self.window_period_s <= 0.0 {
            return Err(SpecError::Period);
        }
        if !(self.duration_s > 0.0 && self.duration_s < self.window_period_s) {
            return Err(SpecError::Duration);
        }
        if self.ports > 65535 {
            return Err(SpecError::Ports);
        }
        for (name, v) in [
            ("windows", self.windows),
            ("ports", self.ports),
            ("flood_packets", self.flood_packets),
            ("spoofed_sources", self.spoofed_sources),
            ("connections", self.connections),
            ("pings", self.pings),
        ] {
            if v == 0 {
                return Err(SpecError::Zero(name));
            }
        }
        if self.victim == self.attacker || self.victim.is_ipv4() != self.attacker.is_ipv4() {
            return Err(SpecError::Addresses);
        }
        Ok(())
    }

    /// Sound groups a detector must produce for an attack window: each inner
    /// list is satisfied by any one of its sounds.
    pub fn signature(&self) -> Vec<Vec<String>> {
        let g = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match self.kind {
            ScenarioKind::Normal => vec![],
            ScenarioKind::Ping => vec![g(&["woodpecker"])],
            ScenarioKind::SynScan => {
                let mut s = vec![g(&["thunder"])];
                let closed = self.ports - open_count(self.ports, self.open_ratio);
                if closed > 25 {
                    s.push(g(&["wind", "wind_on_grass"]));
                }
                s
            }
            ScenarioKind::FinScan => vec![g(&["cricket", "sheep", "owl", "horse_snort"])],
            ScenarioKind::XmasScan => vec![g(&["wolf"])],
            ScenarioKind::NullScan => vec![g(&["frog"])],
            ScenarioKind::SynFlood => vec![g(&["creek", "fire"])],
            ScenarioKind::DdosSpoofed => vec![g(&["fire"])],
        }
    }
}

fn open_count(ports: u32, ratio: f64) -> u32 {
    ((f64::from(ports) * ratio).round() as u32).min(ports)
}

/// A generated capture and its labels.
#[derive(Debug, Clone)]
pub struct Generated {
    pub frames: Vec<RawFrame>,
    pub label: LabelFile,
}

impl Generated {
    pub fn write_pcap<W: Write>(&self, w: W) -> std::io::Result<W> {
        write_pcap(w, self.frames.iter().map(|f| (f.timestamp_us, f.data.as_slice())))
    }
}

/// One packet of an exchange, offset from the exchange start.
struct Step {
    delay_us: u64,
    from_attacker: bool,
    l4: L4<'static>,
}

struct Exchange {
    /// Overrides the remote endpoint (spoofed sources, extra clients).
    remote: Option<IpAddr>,
    steps: Vec<Step>,
}

pub fn generate(spec: &ScenarioSpec) -> Result<Generated, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let period_us = (spec.window_period_s * 1e6).round() as u64;
    let span_us = (spec.duration_s * 1e6).round() as u64;
    let mut frames = Vec::new();
    let mut windows = Vec::new();
    for w in 0..u64::from(spec.windows) {
        let base = spec.start_us + w * period_us;
        let exchanges = scenario_exchanges(spec, &mut rng);
        let mut stamped: Vec<(u64, usize, Vec<u8>)> = Vec::new();
        for ex in exchanges {
            let total: u64 = ex.steps.iter().map(|s| s.delay_us).sum();
            let latest = span_us.saturating_sub(total).max(1);
            let mut t = base + rng.gen_range(0..latest);
            let remote = ex.remote.unwrap_or(spec.attacker);
            for step in ex.steps {
                t += step.delay_us;
                let (src, dst) = if step.from_attacker { (remote, spec.victim) } else { (spec.victim, remote) };
                let seq = stamped.len();
                stamped.push((t, seq, FrameBuilder::new(src, dst).build(step.l4)));
            }
        }
        stamped.sort_by_key(|(t, seq, _)| (*t, *seq));
        frames.extend(stamped.into_iter().map(|(t, _, data)| RawFrame { timestamp_us: t, data }));
        windows.push(WindowLabel { window: w, attack: spec.kind.is_attack(), signature: spec.signature() });
    }
    Ok(Generated {
        frames,
        label: LabelFile {
            scenario: spec.kind,
            seed: spec.seed,
            window_period_s: spec.window_period_s,
            victim: spec.victim,
            windows,
        },
    })
}

fn jitter(rng: &mut ChaCha8Rng) -> u64 {
    rng.gen_range(100..2_000)
}

fn tcp(from_attacker: bool, delay_us: u64, sport: u16, dport: u16, flags: TcpFlags, seq: u32, ack: u32) -> Step {
    let (src_port, dst_port) = if from_attacker { (sport, dport) } else { (dport, sport) };
    Step { delay_us, from_attacker, l4: L4::Tcp { src_port, dst_port, flags, seq, ack } }
}

fn scan_ports(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<u16> {
    let pool_top = spec.ports.clamp(1024, 65535) as u16;
    let mut pool: Vec<u16> = (1..=pool_top).collect();
    pool.shuffle(rng);
    pool.truncate(spec.ports as usize);
    pool
}

fn scenario_exchanges(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<Exchange> {
    use TcpFlags as F;
    let mut out = Vec::new();
    match spec.kind {
        ScenarioKind::Normal => {
            // Remote clients open sessions to a service on the home host:
            // handshake, request, response, graceful close.
            for _ in 0..spec.connections {
                let sport = rng.gen_range(32768..61000);
                let dport = 443;
                let (c, s) = (rng.gen::<u32>(), rng.gen::<u32>());
                let mut steps = vec![
                    tcp(true, 0, sport, dport, F::SYN, c, 0),
                    tcp(false, jitter(rng), sport, dport, F::SYN | F::ACK, s, c + 1),
                    tcp(true, jitter(rng), sport, dport, F::ACK, c + 1, s + 1),
                    tcp(true, jitter(rng), sport, dport, F::PSH | F::ACK, c + 1, s + 1),
                ];
                let chunks = rng.gen_range(1..4u32);
                for i in 0..chunks {
                    steps.push(tcp(false, jitter(rng), sport, dport, F::PSH | F::ACK, s + 1 + i * 1400, c + 300));
                }
                let s_end = s + 1 + chunks * 1400;
                steps.push(tcp(true, jitter(rng), sport, dport, F::ACK, c + 300, s_end));
                steps.push(tcp(true, jitter(rng), sport, dport, F::FIN | F::ACK, c + 300, s_end));
                steps.push(tcp(false, jitter(rng), sport, dport, F::ACK, s_end, c + 301));
                steps.push(tcp(false, jitter(rng), sport, dport, F::FIN | F::ACK, s_end, c + 301));
                steps.push(tcp(true, jitter(rng), sport, dport, F::ACK, c + 301, s_end + 1));
                out.push(Exchange { remote: None, steps });
            }
        }
        ScenarioKind::Ping => {
            let ident = rng.gen();
            for seq in 0..spec.pings as u16 {
                out.push(Exchange {
                    remote: None,
                    steps: vec![
                        Step { delay_us: 0, from_attacker: true, l4: L4::IcmpEcho { reply: false, ident, seq } },
                        Step {
                            delay_us: jitter(rng),
                            from_attacker: false,
                            l4: L4::IcmpEcho { reply: true, ident, seq },
                        },
                    ],
                });
            }
        }
        ScenarioKind::SynScan => {
            let sport = rng.gen_range(40000..60000);
            let ports = scan_ports(spec, rng);
            let open = open_count(spec.ports, spec.open_ratio) as usize;
            for (i, dport) in ports.into_iter().enumerate() {
                let c = rng.gen::<u32>();
                let mut steps = vec![tcp(true, 0, sport, dport, F::SYN, c, 0)];
                if i < open {
                    let s = rng.gen::<u32>();
                    steps.push(tcp(false, jitter(rng), sport, dport, F::SYN | F::ACK, s, c + 1));
                    match spec.scan_mode {
                        ScanMode::HalfOpen => steps.push(tcp(true, jitter(rng), sport, dport, F::RST, c + 1, 0)),
                        ScanMode::Connect => {
                            steps.push(tcp(true, jitter(rng), sport, dport, F::ACK, c + 1, s + 1));
                            steps.push(tcp(true, jitter(rng), sport, dport, F::RST | F::ACK, c + 1, s + 1));
                        }
                    }
                } else {
                    steps.push(tcp(false, jitter(rng), sport, dport, F::RST | F::ACK, 0, c + 1));
                }
                out.push(Exchange { remote: None, steps });
            }
        }
        ScenarioKind::FinScan | ScenarioKind::XmasScan | ScenarioKind::NullScan => {
            // Stealth probes: open ports stay silent, closed ports reset.
            let probe = match spec.kind {
                ScenarioKind::FinScan => F::FIN,
                ScenarioKind::XmasScan => F::URG | F::PSH | F::FIN,
                _ => F::EMPTY,
            };
            let sport = rng.gen_range(40000..60000);
            let ports = scan_ports(spec, rng);
            let open = open_count(spec.ports, spec.open_ratio) as usize;
            for (i, dport) in ports.into_iter().enumerate() {
                let c = rng.gen::<u32>();
                let mut steps = vec![tcp(true, 0, sport, dport, probe, c, 0)];
                if i >= open {
                    steps.push(tcp(false, jitter(rng), sport, dport, F::RST | F::ACK, 0, c));
                }
                out.push(Exchange { remote: None, steps });
            }
        }
        ScenarioKind::SynFlood => {
            // The listener answers until its backlog fills.
            const BACKLOG: u32 = 256;
            for i in 0..spec.flood_packets {
                let sport = rng.gen_range(1024..=65535);
                let c = rng.gen::<u32>();
                let mut steps = vec![tcp(true, 0, sport, 80, F::SYN, c, 0)];
                if i < BACKLOG {
                    steps.push(tcp(false, jitter(rng), sport, 80, F::SYN | F::ACK, rng.gen(), c + 1));
                }
                out.push(Exchange { remote: None, steps });
            }
        }
        ScenarioKind::DdosSpoofed => {
            for src in spoofed_sources(spec, rng) {
                let sport = rng.gen_range(1024..=65535);
                let c = rng.gen::<u32>();
                out.push(Exchange {
                    remote: Some(src),
                    steps: vec![
                        tcp(true, 0, sport, 80, F::SYN, c, 0),
                        tcp(false, jitter(rng), sport, 80, F::SYN | F::ACK, rng.gen(), c + 1),
                    ],
                });
            }
        }
    }
    out
}

/// Distinct IPv4 sources spread over many /24s in 198.18.0.0/15.
fn spoofed_sources(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<IpAddr> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(spec.spoofed_sources as usize);
    let cap = (1u32 << 17) - 2;
    while out.len() < spec.spoofed_sources.min(cap) as usize {
        let n: u32 = rng.gen_range(1..(1 << 17) - 1);
        let ip = IpAddr::V4(Ipv4Addr::from(0xc612_0000u32 | n));
        if ip != spec.victim && seen.insert(ip) {
            out.push(ip);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{Capture, SyntheticSource};
    use crate::packet::HomeNetworks;

    fn home() -> HomeNetworks {
        HomeNetworks::parse(&["10.0.0.0/24"]).unwrap()
    }

    #[test]
    fn deterministic_for_seed() {
        for kind in ScenarioKind::ALL {
            let a = generate(&ScenarioSpec::new(kind, 9)).unwrap();
            let b = generate(&ScenarioSpec::new(kind, 9)).unwrap();
            let c = generate(&ScenarioSpec::new(kind, 10)).unwrap();
            let pa = a.write_pcap(Vec::new()).unwrap();
            assert_eq!(pa, b.write_pcap(Vec::new()).unwrap(), "{kind}");
            assert_ne!(pa, c.write_pcap(Vec::new()).unwrap(), "{kind}");
        }
    }

    #[test]
    fn packets_fit_inside_one_window() {
        for kind in ScenarioKind::ALL {
            let g = generate(&ScenarioSpec::new(kind, 1)).unwrap();
            let first = g.frames.first().unwrap().timestamp_us;
            let last = g.frames.last().unwrap().timestamp_us;
            assert!(last - first < 1_000_000, "{kind}");
            assert!(g.frames.windows(2).all(|w| w[0].timestamp_us <= w[1].timestamp_us));
        }
    }

    #[test]
    fn every_frame_decodes() {
        for kind in ScenarioKind::ALL {
            let g = generate(&ScenarioSpec::new(kind, 2)).unwrap();
            let n = g.frames.len() as u64;
            let mut cap = Capture::new(Box::new(SyntheticSource::new(g.frames)), home());
            while cap.next_packet().unwrap().is_some() {}
            assert_eq!(cap.counters().admitted, n, "{kind}");
        }
    }

    #[test]
    fn syn_scan_counts() {
        let g = generate(&ScenarioSpec::new(ScenarioKind::SynScan, 3)).unwrap();
        let mut cap = Capture::new(Box::new(SyntheticSource::new(g.frames)), home());
        let (mut syn, mut synack) = (0, 0);
        while let Some(p) = cap.next_packet().unwrap() {
            if p.flags() == TcpFlags::SYN {
                syn += 1;
            } else if p.flags() == TcpFlags::SYN | TcpFlags::ACK {
                synack += 1;
            }
        }
        assert_eq!((syn, synack), (400, 8));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = ScenarioSpec::new(ScenarioKind::SynScan, 0);
        s.open_ratio = 1.5;
        assert_eq!(generate(&s).unwrap_err(), SpecError::OpenRatio(1.5));
        let mut s = ScenarioSpec::new(ScenarioKind::Normal, 0);
        s.duration_s = 2.0;
        assert_eq!(s.validate(), Err(SpecError::Duration));
        let mut s = ScenarioSpec::new(ScenarioKind::Ping, 0);
        s.attacker = s.victim;
        assert_eq!(s.validate(), Err(SpecError::Addresses));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("xmas".parse::<ScenarioKind>().unwrap(), ScenarioKind::XmasScan);
        assert_eq!("syn-scan".parse::<ScenarioKind>().unwrap(), ScenarioKind::SynScan);
        assert!("bogus".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn spoofed_sources_are_distinct_and_spread() {
        let g = generate(&ScenarioSpec::new(ScenarioKind::DdosSpoofed, 4)).unwrap();
        let mut cap = Capture::new(Box::new(SyntheticSource::new(g.frames)), home());
        let mut srcs = HashSet::new();
        let mut nets = HashSet::new();
        while let Some(p) = cap.next_packet().unwrap() {
            if p.dst_ip() == IpAddr::V4(Ipv4Addr::new(10, 0, 0, 7)) {
                srcs.insert(p.src_ip());
                if let IpAddr::V4(v4) = p.src_ip() {
                    nets.insert(u32::from(v4) >> 8);
                }
            }
        }
        assert_eq!(srcs.len(), 800);
        assert!(nets.len() >= 100);
    }
}
