//! Wiring: capture events in, window reports and playback plans out.

pub mod live;

use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use crate::capture::{Capture, CaptureError, CaptureEvent};
use crate::config::Validated;
use crate::control::ControlPlane;
use crate::flowtable::WindowState;
use crate::logging::{LogWriter, WindowReport};
use crate::soundscape::{us_to_frames, AssetLibrary, AudioSink, PlaybackPlan, RenderStats, Renderer, WavSink};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> EngineError {
    let context = context.into();
    move |source| EngineError::Io { context, source }
}

/// A finished window with everything derived from it.
#[derive(Debug, Clone)]
pub struct ClosedWindow {
    pub report: WindowReport,
    pub plan: PlaybackPlan,
    /// Configuration the window was evaluated under.
    pub config: Arc<Validated>,
    pub version: u64,
    pub end_us: u64,
}

/// Synchronous window aggregation and rule evaluation. Window 0 starts at the
/// first event's timestamp unless an origin is given.
pub struct Pipeline {
    config: Arc<Validated>,
    version: u64,
    control: Option<Arc<ControlPlane>>,
    staged: Option<Arc<Validated>>,
    window: Option<WindowState>,
    origin_us: Option<u64>,
    dropped: u64,
}

impl Pipeline {
    pub fn new(config: Arc<Validated>) -> Self {
        Pipeline { config, version: 1, control: None, staged: None, window: None, origin_us: None, dropped: 0 }
    }

    /// Takes configuration from, and publishes windows to, a control plane.
    pub fn with_control(control: Arc<ControlPlane>) -> Self {
        let (config, version) = control.active();
        Pipeline { version, control: Some(control), ..Pipeline::new(config) }
    }

    pub fn with_origin(mut self, origin_us: u64) -> Self {
        self.start(origin_us);
        self
    }

    fn start(&mut self, origin_us: u64) {
        self.origin_us = Some(origin_us);
        self.window = Some(WindowState::new(0, self.config.config.window_period_s, origin_us));
    }

    pub fn origin_us(&self) -> Option<u64> {
        self.origin_us
    }

    pub fn config(&self) -> &Arc<Validated> {
        &self.config
    }

    /// Current window index, if started.
    pub fn window_index(&self) -> Option<u64> {
        self.window.as_ref().map(WindowState::window_index)
    }

    /// Stages a configuration for the next window (without a control plane).
    pub fn stage(&mut self, v: Validated) {
        self.staged = Some(Arc::new(v));
    }

    pub fn add_dropped(&mut self, n: u64) {
        self.dropped += n;
    }

    pub fn push(&mut self, ev: CaptureEvent, out: &mut Vec<ClosedWindow>) {
        let ts = match &ev {
            CaptureEvent::Packet(p) => p.timestamp_us(),
            CaptureEvent::Malformed { timestamp_us } => *timestamp_us,
        };
        if self.window.is_none() {
            self.start(ts);
        }
        self.advance_to(ts, out);
        let w = self.window.as_mut().expect("started");
        match ev {
            CaptureEvent::Packet(mut p) => {
                p.rehome(&self.config.home);
                w.record(&p);
            }
            CaptureEvent::Malformed { .. } => w.record_malformed(),
        }
    }

    /// Closes every window that ends at or before `now_us`.
    pub fn advance_to(&mut self, now_us: u64, out: &mut Vec<ClosedWindow>) {
        while self.window.as_ref().is_some_and(|w| w.end_us() <= now_us) {
            out.push(self.rotate());
        }
    }

    fn rotate(&mut self) -> ClosedWindow {
        let w = self.window.take().expect("started");
        let next_index = w.window_index() + 1;
        let (next_cfg, next_version) = match &self.control {
            Some(c) => c.rotate(next_index),
            None => match self.staged.take() {
                Some(v) => (v, self.version + 1),
                None => (Arc::clone(&self.config), self.version),
            },
        };
        let end_us = w.end_us();
        let (snap, next) = w.rotate(next_cfg.config.window_period_s);
        let closed = self.close(snap, end_us);
        self.config = next_cfg;
        self.version = next_version;
        self.window = Some(next);
        closed
    }

    fn close(&mut self, snap: crate::flowtable::WindowSnapshot, end_us: u64) -> ClosedWindow {
        let events = self.config.rules.evaluate_window(&snap);
        let plan = PlaybackPlan::from_events(snap.window_index, &events, &self.config.rules);
        let report = WindowReport::new(snap, events, std::mem::take(&mut self.dropped));
        if let Some(c) = &self.control {
            c.publish(&report, &self.config, self.version);
        }
        ClosedWindow { report, plan, config: Arc::clone(&self.config), version: self.version, end_us }
    }

    /// Closes the window in progress, if any.
    pub fn finish(mut self, out: &mut Vec<ClosedWindow>) {
        if let Some(w) = self.window.take() {
            let end_us = w.end_us();
            let closed = self.close(w.snapshot(), end_us);
            out.push(closed);
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OfflineOptions {
    pub logs: Option<PathBuf>,
    pub log_rotate_bytes: Option<u64>,
    pub wav: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub windows: u64,
    pub packets: u64,
    pub malformed: u64,
    pub skipped: u64,
    pub dropped: u64,
    pub events: u64,
    pub render: Option<RenderStats>,
    /// (frame, sound id) of every voice started in the rendered audio.
    pub voice_starts: Vec<(u64, String)>,
    pub logging_degraded: bool,
}

impl RunSummary {
    fn absorb(&mut self, w: &ClosedWindow) {
        self.windows += 1;
        self.packets += w.report.stats.packets;
        self.dropped += w.report.stats.dropped;
        self.events += w.report.events.len() as u64;
    }
}

/// Consumes a capture as fast as possible, writing logs and rendered audio.
/// Sounds for window n start at the end of window n on the output timeline.
pub fn run_offline(
    capture: &mut Capture,
    pipeline: Pipeline,
    library: Arc<AssetLibrary>,
    opts: &OfflineOptions,
    mut observe: impl FnMut(&ClosedWindow),
) -> Result<RunSummary, EngineError> {
    let mut logs = match &opts.logs {
        Some(dir) => Some(
            LogWriter::create(dir)
                .map_err(io_err(format!("cannot create logs in {}", dir.display())))?
                .with_rotation(opts.log_rotate_bytes),
        ),
        None => None,
    };
    let mut renderer = match &opts.wav {
        Some(path) => {
            let sink: Box<dyn AudioSink> =
                Box::new(WavSink::create(path).map_err(io_err(format!("cannot create {}", path.display())))?);
            Some(Renderer::new(library, sink))
        }
        None => None,
    };

    let mut summary = RunSummary::default();
    let mut pipeline = pipeline;
    let mut closed = Vec::new();
    let mut last_end = None;
    let mut handle = |batch: &mut Vec<ClosedWindow>,
                      origin: u64,
                      summary: &mut RunSummary,
                      logs: &mut Option<LogWriter>,
                      renderer: &mut Option<Renderer>|
     -> Result<(), EngineError> {
        for w in batch.drain(..) {
            summary.absorb(&w);
            if let Some(l) = logs.as_mut() {
                if let Err(e) = l.write_report(&w.report) {
                    tracing::warn!("log write failed, continuing without logs: {e}");
                    summary.logging_degraded = true;
                    *logs = None;
                }
            }
            if let Some(r) = renderer.as_mut() {
                r.schedule(us_to_frames(w.end_us - origin), &w.plan).map_err(io_err("audio render"))?;
            }
            last_end = Some(w.end_us);
            observe(&w);
        }
        Ok(())
    };

    while let Some(ev) = capture.next_event()? {
        pipeline.push(ev, &mut closed);
        if !closed.is_empty() {
            let origin = pipeline.origin_us().expect("started");
            handle(&mut closed, origin, &mut summary, &mut logs, &mut renderer)?;
        }
    }
    let origin = pipeline.origin_us();
    pipeline.finish(&mut closed);
    if let Some(origin) = origin {
        handle(&mut closed, origin, &mut summary, &mut logs, &mut renderer)?;
    }

    if let Some(mut l) = logs {
        if let Err(e) = l.flush() {
            tracing::warn!("log flush failed: {e}");
            summary.logging_degraded = true;
        }
    }
    if let Some(r) = renderer {
        let min_end = match (origin, last_end) {
            (Some(o), Some(e)) => us_to_frames(e - o),
            _ => 0,
        };
        summary.voice_starts = r.voice_starts().to_vec();
        summary.render = Some(r.finish(min_end).map_err(io_err("audio render"))?);
    }
    let c = capture.counters();
    summary.malformed = c.malformed;
    summary.skipped = c.skipped;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{RawFrame, SyntheticSource};
    use crate::config::EngineConfig;
    use crate::packet::{HomeNetworks, TcpFlags};
    use crate::rules::SoundCatalog;
    use crate::trafficgen::{FrameBuilder, L4};

    fn validated(period: f64) -> Validated {
        EngineConfig { window_period_s: period, home_networks: vec!["10.0.0.0/24".into()], ..Default::default() }
            .validate(&SoundCatalog::stock())
            .unwrap()
    }

    fn syn(ts: u64) -> RawFrame {
        let b = FrameBuilder::new("203.0.113.5".parse().unwrap(), "10.0.0.7".parse().unwrap());
        RawFrame {
            timestamp_us: ts,
            data: b.build(L4::Tcp { src_port: 1, dst_port: 2, flags: TcpFlags::SYN, seq: 0, ack: 0 }),
        }
    }

    fn capture(frames: Vec<RawFrame>) -> Capture {
        Capture::new(Box::new(SyntheticSource::new(frames)), HomeNetworks::parse(&["10.0.0.0/24"]).unwrap())
    }

    #[test]
    fn windows_include_empty_gaps() {
        let mut cap = capture(vec![syn(10), syn(500_000), syn(3_200_000)]);
        let mut seen = Vec::new();
        let s = run_offline(
            &mut cap,
            Pipeline::new(Arc::new(validated(1.0))),
            Arc::new(AssetLibrary::new()),
            &OfflineOptions::default(),
            |w| {
                seen.push((w.report.window_index(), w.report.stats.packets, w.report.snapshot.start_us));
            },
        )
        .unwrap();
        assert_eq!(seen, vec![(0, 2, 10), (1, 0, 1_000_010), (2, 0, 2_000_010), (3, 1, 3_000_010)]);
        assert_eq!((s.windows, s.packets), (4, 3));
    }

    #[test]
    fn staged_period_applies_next_window() {
        let mut p = Pipeline::new(Arc::new(validated(1.0)));
        let mut out = Vec::new();
        let mut cap = capture(vec![syn(0)]);
        p.push(cap.next_event().unwrap().unwrap(), &mut out);
        p.stage(validated(0.5));
        p.advance_to(1_000_000, &mut out);
        p.advance_to(1_500_000, &mut out);
        let windows: Vec<_> =
            out.iter().map(|w| (w.report.snapshot.start_us, w.report.snapshot.window_period_s, w.version)).collect();
        assert_eq!(windows, vec![(0, 1.0, 1), (1_000_000, 0.5, 2)]);
    }

    #[test]
    fn wav_length_covers_windows_and_tail() {
        let dir = tempfile::tempdir().unwrap();
        let wav = dir.path().join("o.wav");
        let frames: Vec<_> = (0..400).map(|i| syn(i * 100)).chain([syn(2_500_000)]).collect();
        let mut cap = capture(frames);
        let lib = Arc::new(AssetLibrary::placeholder());
        let opts = OfflineOptions { wav: Some(wav.clone()), logs: Some(dir.path().join("logs")), ..Default::default() };
        let s = run_offline(&mut cap, Pipeline::new(Arc::new(validated(1.0))), lib, &opts, |_| {}).unwrap();
        let r = hound::WavReader::open(&wav).unwrap();
        assert!(u64::from(r.duration()) >= 3 * 44_100);
        assert_eq!(u64::from(r.duration()), s.render.unwrap().frames_written);
        assert!(s.voice_starts.iter().any(|(f, id)| *f == 44_100 && id == "thunder"));
        assert!(dir.path().join("logs/events.log").exists());
    }
}
