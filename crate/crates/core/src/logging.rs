//! Per-window flow logs and the event log.
//!
//! `ipflow.log` and `trafficflow.log` are space-delimited text; every window
//! opens with a `# window` comment even when it has no rows. `events.log` holds
//! one JSON object per line.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::flowtable::{PacketTypeCounters, WindowSnapshot};
use crate::packet::Protocol;
use crate::rules::{Category, EventInstance};

pub const IP_FLOW_LOG: &str = "ipflow.log";
pub const TRAFFIC_FLOW_LOG: &str = "trafficflow.log";
pub const EVENT_LOG: &str = "events.log";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowStats {
    pub traffic_flows: u64,
    pub ip_flows: u64,
    pub packets: u64,
    pub malformed: u64,
    pub transit: u64,
    /// Packets lost to queue overflow before reaching the flow table.
    pub dropped: u64,
}

/// Everything produced for one finished window.
#[derive(Debug, Clone)]
pub struct WindowReport {
    pub snapshot: WindowSnapshot,
    pub events: Vec<EventInstance>,
    /// Distinct sound ids in `events`, sorted.
    pub triggered_sound_ids: Vec<String>,
    pub stats: WindowStats,
}

impl WindowReport {
    pub fn new(snapshot: WindowSnapshot, events: Vec<EventInstance>, dropped: u64) -> Self {
        let triggered_sound_ids: Vec<String> =
            events.iter().map(|e| e.sound_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let stats = WindowStats {
            traffic_flows: snapshot.traffic_flow_count(),
            ip_flows: snapshot.ip_flow_count(),
            packets: snapshot.packets,
            malformed: snapshot.malformed,
            transit: snapshot.transit,
            dropped,
        };
        WindowReport { snapshot, events, triggered_sound_ids, stats }
    }

    pub fn window_index(&self) -> u64 {
        self.snapshot.window_index
    }
}

/// One line of `events.log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub window: u64,
    pub rule_id: String,
    pub ip_a: Option<IpAddr>,
    pub ip_b: Option<IpAddr>,
    pub protocol: Option<Protocol>,
    pub sound: String,
    pub category: Category,
    pub features: serde_json::Map<String, serde_json::Value>,
}

fn event_line(ev: &EventInstance) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        window: u64,
        rule_id: &'a str,
        ip_a: Option<IpAddr>,
        ip_b: Option<IpAddr>,
        protocol: Option<Protocol>,
        sound: &'a str,
        category: Category,
        features: &'a crate::features::FeatureView,
    }
    let line = Line {
        window: ev.window_index,
        rule_id: &ev.rule_id,
        ip_a: ev.flow.map(|k| k.ip_a),
        ip_b: ev.flow.map(|k| k.ip_b),
        protocol: ev.flow.map(|k| k.protocol),
        sound: &ev.sound_id,
        category: ev.category,
        features: &ev.features,
    };
    serde_json::to_string(&line).expect("event serializes")
}

fn window_comment(r: &WindowReport) -> String {
    format!(
        "# window {} start_us={} period_s={} traffic_flows={} ip_flows={} packets={} malformed={} dropped={}\n",
        r.window_index(),
        r.snapshot.start_us,
        r.snapshot.window_period_s,
        r.stats.traffic_flows,
        r.stats.ip_flows,
        r.stats.packets,
        r.stats.malformed,
        r.stats.dropped,
    )
}

fn counter_cols(out: &mut String, c: &PacketTypeCounters) {
    use std::fmt::Write as _;
    for v in c.columns() {
        let _ = write!(out, " {v}");
    }
}

pub fn ip_flow_header() -> String {
    format!("# columns: window flow ip_a ip_b {}\n", PacketTypeCounters::column_labels().join(" "))
}

pub fn traffic_flow_header() -> String {
    format!("# columns: window flow ip_a ip_b port_a port_b {}\n", PacketTypeCounters::column_labels().join(" "))
}

/// Text appended to `ipflow.log` for one window.
pub fn format_ip_flows(r: &WindowReport) -> String {
    use std::fmt::Write as _;
    let mut s = window_comment(r);
    for (i, (k, c)) in r.snapshot.ip_flows.iter().enumerate() {
        let _ = write!(s, "{} {} {} {}", r.window_index(), i + 1, k.ip_a, k.ip_b);
        counter_cols(&mut s, c);
        s.push('\n');
    }
    s
}

/// Text appended to `trafficflow.log` for one window.
pub fn format_traffic_flows(r: &WindowReport) -> String {
    use std::fmt::Write as _;
    let mut s = window_comment(r);
    for (i, (k, c)) in r.snapshot.traffic_flows.iter().enumerate() {
        let _ = write!(s, "{} {} {} {} {} {}", r.window_index(), i + 1, k.ip_a, k.ip_b, k.port_a, k.port_b);
        counter_cols(&mut s, c);
        s.push('\n');
    }
    s
}

/// Text appended to `events.log` for one window.
pub fn format_events(r: &WindowReport) -> String {
    let mut s = String::new();
    for ev in &r.events {
        s.push_str(&event_line(ev));
        s.push('\n');
    }
    s
}

pub fn parse_event_log(text: &str) -> Result<Vec<EventRecord>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogKind {
    IpFlow,
    TrafficFlow,
    Events,
}

impl LogKind {
    const ALL: [LogKind; 3] = [LogKind::IpFlow, LogKind::TrafficFlow, LogKind::Events];

    fn file_name(self) -> &'static str {
        match self {
            LogKind::IpFlow => IP_FLOW_LOG,
            LogKind::TrafficFlow => TRAFFIC_FLOW_LOG,
            LogKind::Events => EVENT_LOG,
        }
    }

    fn header(self) -> Option<String> {
        match self {
            LogKind::IpFlow => Some(ip_flow_header()),
            LogKind::TrafficFlow => Some(traffic_flow_header()),
            LogKind::Events => None,
        }
    }
}

struct LogFile {
    kind: LogKind,
    path: PathBuf,
    out: BufWriter<File>,
    bytes: u64,
}

impl LogFile {
    fn create(dir: &Path, kind: LogKind) -> io::Result<Self> {
        let path = dir.join(kind.file_name());
        let mut out = BufWriter::new(File::create(&path)?);
        let mut bytes = 0;
        if let Some(h) = kind.header() {
            out.write_all(h.as_bytes())?;
            bytes = h.len() as u64;
        }
        Ok(LogFile { kind, path, out, bytes })
    }

    fn append(&mut self, text: &str) -> io::Result<()> {
        self.out.write_all(text.as_bytes())?;
        self.bytes += text.len() as u64;
        Ok(())
    }
}

/// Writes the three logs under one directory. Files are truncated on open.
pub struct LogWriter {
    dir: PathBuf,
    files: Vec<LogFile>,
    rotate_bytes: Option<u64>,
    rotations: u32,
}

impl LogWriter {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let files = LogKind::ALL.iter().map(|k| LogFile::create(dir, *k)).collect::<io::Result<_>>()?;
        Ok(LogWriter { dir: dir.to_path_buf(), files, rotate_bytes: None, rotations: 0 })
    }

    /// Once any file passes `limit` bytes, all three are rotated together
    /// before the next window, so a window never straddles two files.
    pub fn with_rotation(mut self, limit: Option<u64>) -> Self {
        self.rotate_bytes = limit;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_report(&mut self, r: &WindowReport) -> io::Result<()> {
        if let Some(limit) = self.rotate_bytes {
            if self.files.iter().any(|f| f.bytes >= limit) {
                self.rotate()?;
            }
        }
        let texts = [format_ip_flows(r), format_traffic_flows(r), format_events(r)];
        for (f, t) in self.files.iter_mut().zip(texts.iter()) {
            f.append(t)?;
        }
        Ok(())
    }

    fn rotate(&mut self) -> io::Result<()> {
        self.flush()?;
        self.rotations += 1;
        for f in self.files.iter_mut() {
            let rotated = f.path.with_extension(format!("log.{}", self.rotations));
            fs::rename(&f.path, rotated)?;
            *f = LogFile::create(&self.dir, f.kind)?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        for f in self.files.iter_mut() {
            f.out.flush()?;
        }
        Ok(())
    }
}

impl Drop for LogWriter {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowtable::WindowState;
    use crate::packet::{HomeNetworks, PacketSummary, TcpFlags};
    use crate::rules::RuleSet;

    fn report(window: u64, pkts: &[(u16, TcpFlags)]) -> WindowReport {
        let home = HomeNetworks::parse(&["10.0.0.0/24"]).unwrap();
        let mut w = WindowState::new(window, 1.0, window * 1_000_000);
        for (i, (port, flags)) in pkts.iter().enumerate() {
            let p = PacketSummary::tcp(
                window * 1_000_000 + i as u64,
                ("203.0.113.5".parse().unwrap(), *port),
                ("10.0.0.7".parse().unwrap(), 443),
                *flags,
                &home,
            );
            w.record(&p);
        }
        let snap = w.snapshot();
        let events = RuleSet::defaults().evaluate_window(&snap);
        WindowReport::new(snap, events, 0)
    }

    #[test]
    fn row_format() {
        let r = report(3, &[(52110, TcpFlags::SYN); 12]);
        let text = format_ip_flows(&r);
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# window 3 start_us=3000000 "));
        let row = lines.next().unwrap();
        assert!(row.starts_with("3 1 10.0.0.7 203.0.113.5 12 0 0 "), "{row}");
        assert_eq!(row.split(' ').count(), 4 + 30);
        let t = format_traffic_flows(&r);
        assert!(t.lines().nth(1).unwrap().starts_with("3 1 10.0.0.7 203.0.113.5 443 52110 12 0"));
    }

    #[test]
    fn conflated_flows_row_counts() {
        let pkts: Vec<_> = (0..7).map(|i| (40000 + i, TcpFlags::SYN)).collect();
        let r = report(0, &pkts);
        assert_eq!(format_ip_flows(&r).lines().count(), 2);
        assert_eq!(format_traffic_flows(&r).lines().count(), 8);
    }

    #[test]
    fn empty_window_writes_only_boundary() {
        let r = report(5, &[]);
        assert_eq!(format_ip_flows(&r).lines().count(), 1);
        assert_eq!(format_events(&r), "");
    }

    #[test]
    fn event_records_round_trip() {
        let r = report(0, &[(1, TcpFlags::SYN); 400]);
        let text = format_events(&r);
        let recs = parse_event_log(&text).unwrap();
        assert_eq!(recs.len(), r.events.len());
        let thunder = recs.iter().find(|e| e.rule_id == "rule4").unwrap();
        assert_eq!(thunder.sound, "thunder");
        assert_eq!(thunder.features["SYN-in-IP"], 400);
        assert_eq!(thunder.protocol, Some(Protocol::Tcp));
        assert!(text.lines().next().unwrap().contains(r#""features":{"SYN-in-IP":"#));
        let sounds: BTreeSet<_> = recs.iter().map(|e| e.sound.clone()).collect();
        assert_eq!(sounds.into_iter().collect::<Vec<_>>(), r.triggered_sound_ids);
    }

    #[test]
    fn writer_headers_once_and_rotation() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = LogWriter::create(dir.path()).unwrap().with_rotation(Some(200));
        for i in 0..3 {
            w.write_report(&report(i, &[(1, TcpFlags::SYN)])).unwrap();
        }
        drop(w);
        let current = fs::read_to_string(dir.path().join(IP_FLOW_LOG)).unwrap();
        assert_eq!(current.matches("# columns:").count(), 1);
        assert!(current.contains("# window 2 "));
        assert!(dir.path().join("ipflow.log.1").exists());
        assert!(dir.path().join("events.log.1").exists());
    }
}
