//! Threaded runtime: capture, aggregation, logging and audio joined by
//! bounded queues. Capture never blocks on aggregation; overflow is dropped
//! and counted against the window in progress.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crossbeam_channel::{bounded, RecvTimeoutError, TryRecvError, TrySendError};

use super::{ClosedWindow, Pipeline, RunSummary};
use crate::capture::{Capture, CaptureError, CaptureEvent, FrameSource, RawFrame};
use crate::control::ControlPlane;
use crate::logging::LogWriter;
use crate::packet::HomeNetworks;
use crate::soundscape::{AssetLibrary, AudioSink, PlaybackPlan, Renderer, BLOCK_FRAMES, ENGINE_RATE};

/// Source of "now" in packet-timestamp microseconds, used to close windows
/// when no traffic arrives.
#[derive(Clone)]
pub enum Clock {
    Wall,
    Replay(Arc<ReplayClock>),
}

impl Clock {
    pub fn now_us(&self) -> Option<u64> {
        match self {
            Clock::Wall => Some(wall_us()),
            Clock::Replay(r) => r.now_us(),
        }
    }
}

pub fn wall_us() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0)
}

/// Maps elapsed real time onto a recording's timeline, anchored at its first
/// frame.
#[derive(Default)]
pub struct ReplayClock {
    anchor: Mutex<Option<(u64, Instant)>>,
}

impl ReplayClock {
    fn anchor(&self, ts: u64) -> (u64, Instant) {
        *self.anchor.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert((ts, Instant::now()))
    }

    pub fn now_us(&self) -> Option<u64> {
        let a = *self.anchor.lock().unwrap_or_else(|p| p.into_inner());
        a.map(|(ts, at)| ts + at.elapsed().as_micros() as u64)
    }
}

/// Releases frames at their recorded pace.
pub struct PacedSource {
    inner: Box<dyn FrameSource>,
    clock: Arc<ReplayClock>,
    stop: Arc<AtomicBool>,
}

impl PacedSource {
    pub fn new(inner: Box<dyn FrameSource>, stop: Arc<AtomicBool>) -> Self {
        PacedSource { inner, clock: Arc::new(ReplayClock::default()), stop }
    }

    pub fn clock(&self) -> Arc<ReplayClock> {
        Arc::clone(&self.clock)
    }
}

impl FrameSource for PacedSource {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, CaptureError> {
        let Some(frame) = self.inner.next_frame()? else { return Ok(None) };
        let (t0, at) = self.clock.anchor(frame.timestamp_us);
        let due = at + Duration::from_micros(frame.timestamp_us.saturating_sub(t0));
        loop {
            if self.stop.load(Ordering::Relaxed) {
                return Ok(None);
            }
            let now = Instant::now();
            if now >= due {
                return Ok(Some(frame));
            }
            thread::sleep((due - now).min(Duration::from_millis(50)));
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiveOptions {
    pub packet_queue: usize,
    pub report_queue: usize,
    pub plan_queue: usize,
    /// Start window 0 now instead of at the first packet.
    pub wall_origin: bool,
}

impl Default for LiveOptions {
    fn default() -> Self {
        LiveOptions { packet_queue: 65_536, report_queue: 64, plan_queue: 16, wall_origin: true }
    }
}

pub struct LiveEngine {
    stop: Arc<AtomicBool>,
    dropped: Arc<AtomicU64>,
    capture: JoinHandle<Result<(), CaptureError>>,
    aggregate: JoinHandle<RunSummary>,
    logger: Option<JoinHandle<()>>,
    audio: JoinHandle<()>,
}

impl LiveEngine {
    /// Starts all stages. `stop` ends capture; the rest drains in order.
    #[allow(clippy::too_many_arguments)]
    pub fn spawn(
        frames: Box<dyn FrameSource>,
        home: HomeNetworks,
        clock: Clock,
        control: Arc<ControlPlane>,
        library: Arc<AssetLibrary>,
        sink: Box<dyn AudioSink>,
        logs: Option<LogWriter>,
        stop: Arc<AtomicBool>,
        opts: LiveOptions,
    ) -> Self {
        let dropped = Arc::new(AtomicU64::new(0));
        let (pkt_tx, pkt_rx) = bounded::<CaptureEvent>(opts.packet_queue);
        let (plan_tx, plan_rx) = bounded::<PlaybackPlan>(opts.plan_queue);
        let (log_tx, log_rx) = bounded::<ClosedWindow>(opts.report_queue);

        let capture = {
            let stop = Arc::clone(&stop);
            let dropped = Arc::clone(&dropped);
            thread::Builder::new()
                .name("capture".into())
                .spawn(move || {
                    let mut cap = Capture::new(frames, home);
                    while !stop.load(Ordering::Relaxed) {
                        let Some(ev) = cap.next_event()? else { break };
                        match pkt_tx.try_send(ev) {
                            Ok(()) => {}
                            Err(TrySendError::Full(_)) => {
                                dropped.fetch_add(1, Ordering::Relaxed);
                            }
                            Err(TrySendError::Disconnected(_)) => break,
                        }
                    }
                    Ok(())
                })
                .expect("spawn capture thread")
        };

        let logger = logs.map(|mut writer| {
            let control = Arc::clone(&control);
            thread::Builder::new()
                .name("logging".into())
                .spawn(move || {
                    let mut healthy = true;
                    for w in log_rx {
                        if healthy {
                            if let Err(e) = writer.write_report(&w.report).and_then(|_| writer.flush()) {
                                tracing::warn!("log write failed, logging disabled: {e}");
                                control.set_logging_degraded();
                                healthy = false;
                            }
                        }
                    }
                })
                .expect("spawn logging thread")
        });
        let has_logger = logger.is_some();

        let aggregate = {
            let control = Arc::clone(&control);
            let dropped = Arc::clone(&dropped);
            let wall_origin = opts.wall_origin;
            thread::Builder::new()
                .name("aggregate".into())
                .spawn(move || {
                    let mut pipeline = Pipeline::with_control(Arc::clone(&control));
                    if wall_origin {
                        if let Some(now) = clock.now_us() {
                            pipeline = pipeline.with_origin(now);
                        }
                    }
                    let mut summary = RunSummary::default();
                    let mut out = Vec::new();
                    let forward = |out: &mut Vec<ClosedWindow>, summary: &mut RunSummary| {
                        for w in out.drain(..) {
                            summary.absorb(&w);
                            if plan_tx.try_send(w.plan.clone()).is_err() {
                                tracing::debug!("audio queue full; plan for window {} skipped", w.plan.window_index);
                            }
                            if has_logger {
                                if let Err(TrySendError::Full(_)) = log_tx.try_send(w) {
                                    summary.logging_degraded = true;
                                    control.set_logging_degraded();
                                }
                            }
                        }
                    };
                    loop {
                        match pkt_rx.recv_timeout(Duration::from_millis(20)) {
                            Ok(ev) => {
                                pipeline.push(ev, &mut out);
                                while let Ok(ev) = pkt_rx.try_recv() {
                                    pipeline.push(ev, &mut out);
                                    if !out.is_empty() {
                                        break;
                                    }
                                }
                            }
                            Err(RecvTimeoutError::Timeout) => {}
                            Err(RecvTimeoutError::Disconnected) => break,
                        }
                        pipeline.add_dropped(dropped.swap(0, Ordering::Relaxed));
                        if let Some(now) = clock.now_us() {
                            if pipeline.origin_us().is_some() {
                                pipeline.advance_to(now, &mut out);
                            }
                        }
                        forward(&mut out, &mut summary);
                    }
                    pipeline.add_dropped(dropped.swap(0, Ordering::Relaxed));
                    pipeline.finish(&mut out);
                    forward(&mut out, &mut summary);
                    control.shutdown();
                    summary
                })
                .expect("spawn aggregate thread")
        };

        let audio = {
            let stop = Arc::clone(&stop);
            thread::Builder::new()
                .name("audio".into())
                .spawn(move || audio_loop(plan_rx, library, sink, stop))
                .expect("spawn audio thread")
        };

        LiveEngine { stop, dropped, capture, aggregate, logger, audio }
    }

    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn dropped_so_far(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    /// Waits for every stage to drain.
    pub fn join(self) -> Result<RunSummary, CaptureError> {
        let cap = self.capture.join().unwrap_or(Ok(()));
        let summary = self.aggregate.join().unwrap_or_default();
        if let Some(l) = self.logger {
            let _ = l.join();
        }
        let _ = self.audio.join();
        cap.map(|_| summary)
    }
}

fn audio_loop(
    plans: crossbeam_channel::Receiver<PlaybackPlan>,
    library: Arc<AssetLibrary>,
    sink: Box<dyn AudioSink>,
    stop: Arc<AtomicBool>,
) {
    let paced = sink.paced();
    let mut r = Renderer::new(library, sink);
    let started = Instant::now();
    let mut open = true;
    while open || (paced && r.active_voices() > 0 && !stop.load(Ordering::Relaxed)) {
        loop {
            match plans.try_recv() {
                Ok(plan) => {
                    let now = r.frames_written();
                    if let Err(e) = r.schedule(now, &plan) {
                        tracing::warn!("audio output failed: {e}");
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    open = false;
                    break;
                }
            }
        }
        let target = r.frames_written() + BLOCK_FRAMES as u64;
        if let Err(e) = r.advance_to(target) {
            tracing::warn!("audio output failed: {e}");
            return;
        }
        if !paced {
            let due = started + Duration::from_secs_f64(target as f64 / f64::from(ENGINE_RATE));
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
    }
    if let Err(e) = r.finish(0) {
        tracing::warn!("audio output failed: {e}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::SyntheticSource;
    use crate::config::EngineConfig;
    use crate::packet::TcpFlags;
    use crate::rules::SoundCatalog;
    use crate::soundscape::NullSink;
    use crate::trafficgen::{FrameBuilder, L4};

    #[test]
    fn replay_runs_all_windows_and_streams() {
        let cfg =
            EngineConfig { window_period_s: 0.05, home_networks: vec!["10.0.0.0/24".into()], ..Default::default() };
        let catalog = SoundCatalog::stock();
        let home = HomeNetworks::parse(&cfg.home_networks).unwrap();
        let control = ControlPlane::new(cfg.validate(&catalog).unwrap(), catalog);
        let sub = control.subscribe(64);
        let b = FrameBuilder::new("203.0.113.5".parse().unwrap(), "10.0.0.7".parse().unwrap());
        let frames: Vec<_> = (0..200u64)
            .map(|i| RawFrame {
                timestamp_us: 1_000 + i * 1_000,
                data: b.build(L4::Tcp { src_port: 1, dst_port: (i % 50) as u16, flags: TcpFlags::SYN, seq: 0, ack: 0 }),
            })
            .collect();
        let stop = Arc::new(AtomicBool::new(false));
        let paced = PacedSource::new(Box::new(SyntheticSource::new(frames)), Arc::clone(&stop));
        let clock = Clock::Replay(paced.clock());
        let dir = tempfile::tempdir().unwrap();
        let logs = LogWriter::create(dir.path()).unwrap();
        let opts = LiveOptions { wall_origin: false, ..Default::default() };
        let engine = LiveEngine::spawn(
            Box::new(paced),
            home,
            clock,
            Arc::clone(&control),
            Arc::new(AssetLibrary::placeholder()),
            Box::new(NullSink),
            Some(logs),
            stop,
            opts,
        );
        let summary = engine.join().unwrap();
        assert_eq!(summary.packets, 200);
        assert_eq!(summary.dropped, 0);
        assert!(summary.windows >= 4);
        let mut got = Vec::new();
        while let Some(s) = sub.try_recv() {
            got.push(s.window_index);
        }
        assert_eq!(got, (0..summary.windows).collect::<Vec<_>>());
        let log = std::fs::read_to_string(dir.path().join("ipflow.log")).unwrap();
        assert_eq!(log.matches("# window ").count() as u64, summary.windows);
    }
}
