//! Live configuration staging, engine status, and the window-summary feed.
//!
//! Mutations are validated whole and staged; the engine swaps the staged
//! configuration in at the next window rotation, so a window is always
//! evaluated under exactly one configuration.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender, TrySendError};
use serde::Serialize;

use crate::config::{ConfigError, ConfigPatch, EngineConfig, Validated};
use crate::logging::{WindowReport, WindowStats};
use crate::packet::Protocol;
use crate::rules::{Category, SoundCatalog};

pub const DEFAULT_SUBSCRIBER_BUFFER: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ControlError {
    #[error("configuration rejected")]
    Invalid { errors: Vec<ConfigError> },
    #[error("stale base version {base}; current version is {current}")]
    Conflict { base: u64, current: u64 },
    #[error("unknown rule {rule}")]
    UnknownRule { rule: String },
}

/// Result of an accepted mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Accepted {
    pub version: u64,
    pub activates_at_window: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub windows: u64,
    pub packets: u64,
    pub malformed: u64,
    pub dropped: u64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineState {
    pub window_index: u64,
    pub window_period_s: f64,
    pub traffic_flows: u64,
    pub ip_flows: u64,
    pub last_window: Option<u64>,
    pub last_sounds: Vec<String>,
    pub last_stats: WindowStats,
    pub totals: Totals,
    pub config_version: u64,
    pub active_version: u64,
    pub staged_version: Option<u64>,
    pub logging_degraded: bool,
    pub subscribers: usize,
    pub running: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSummary {
    pub rule_id: String,
    pub sound: String,
    pub category: Category,
    pub ip_a: Option<std::net::IpAddr>,
    pub ip_b: Option<std::net::IpAddr>,
    pub protocol: Option<Protocol>,
    /// Values of the features the rule's condition mentions.
    pub features: BTreeMap<String, i64>,
}

/// What subscribers receive once per finished window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSummary {
    pub window_index: u64,
    pub start_us: u64,
    pub window_period_s: f64,
    pub config_version: u64,
    pub events: Vec<EventSummary>,
    pub sounds: Vec<String>,
    pub stats: WindowStats,
}

impl WindowSummary {
    pub fn from_report(r: &WindowReport, v: &Validated, version: u64) -> Self {
        let events = r
            .events
            .iter()
            .map(|e| {
                let features = v
                    .rules
                    .get(&e.rule_id)
                    .map(|rule| {
                        rule.referenced_features()
                            .iter()
                            .map(|id| (e.features.space().name(*id).to_string(), e.features.value(*id)))
                            .collect()
                    })
                    .unwrap_or_default();
                EventSummary {
                    rule_id: e.rule_id.clone(),
                    sound: e.sound_id.clone(),
                    category: e.category,
                    ip_a: e.flow.map(|k| k.ip_a),
                    ip_b: e.flow.map(|k| k.ip_b),
                    protocol: e.flow.map(|k| k.protocol),
                    features,
                }
            })
            .collect();
        WindowSummary {
            window_index: r.window_index(),
            start_us: r.snapshot.start_us,
            window_period_s: r.snapshot.window_period_s,
            config_version: version,
            events,
            sounds: r.triggered_sound_ids.clone(),
            stats: r.stats,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    /// The subscriber fell a full buffer behind.
    SlowConsumer,
    /// The engine stopped.
    Shutdown,
}

impl CloseReason {
    pub fn code(self) -> &'static str {
        match self {
            CloseReason::SlowConsumer => "slow_consumer",
            CloseReason::Shutdown => "shutdown",
        }
    }
}

struct Subscriber {
    tx: Sender<Arc<WindowSummary>>,
    slow: Arc<AtomicBool>,
}

pub struct Subscription {
    rx: Receiver<Arc<WindowSummary>>,
    slow: Arc<AtomicBool>,
}

impl Subscription {
    /// Next summary, or why the feed ended.
    pub fn recv(&self) -> Result<Arc<WindowSummary>, CloseReason> {
        self.rx.recv().map_err(|_| self.reason())
    }

    /// `Ok(None)` on timeout.
    pub fn recv_timeout(&self, t: std::time::Duration) -> Result<Option<Arc<WindowSummary>>, CloseReason> {
        match self.rx.recv_timeout(t) {
            Ok(s) => Ok(Some(s)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(self.reason()),
        }
    }

    pub fn try_recv(&self) -> Option<Arc<WindowSummary>> {
        self.rx.try_recv().ok()
    }

    fn reason(&self) -> CloseReason {
        if self.slow.load(Ordering::Acquire) {
            CloseReason::SlowConsumer
        } else {
            CloseReason::Shutdown
        }
    }
}

struct Inner {
    active: Arc<Validated>,
    active_version: u64,
    /// Latest accepted configuration, not yet active.
    staged: Option<(Arc<Validated>, u64)>,
    version: u64,
    catalog: SoundCatalog,
    window_index: u64,
    last: Option<Arc<WindowSummary>>,
    totals: Totals,
    logging_degraded: bool,
    subscribers: Vec<Subscriber>,
    running: bool,
}

impl Inner {
    fn latest(&self) -> &Arc<Validated> {
        self.staged.as_ref().map(|(v, _)| v).unwrap_or(&self.active)
    }
}

pub struct ControlPlane {
    inner: Mutex<Inner>,
}

impl ControlPlane {
    pub fn new(initial: Validated, catalog: SoundCatalog) -> Arc<Self> {
        Arc::new(ControlPlane {
            inner: Mutex::new(Inner {
                active: Arc::new(initial),
                active_version: 1,
                staged: None,
                version: 1,
                catalog,
                window_index: 0,
                last: None,
                totals: Totals::default(),
                logging_degraded: false,
                subscribers: Vec::new(),
                running: true,
            }),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn state(&self) -> EngineState {
        let g = self.lock();
        let last = g.last.as_deref();
        EngineState {
            window_index: g.window_index,
            window_period_s: g.active.config.window_period_s,
            traffic_flows: last.map_or(0, |s| s.stats.traffic_flows),
            ip_flows: last.map_or(0, |s| s.stats.ip_flows),
            last_window: last.map(|s| s.window_index),
            last_sounds: last.map(|s| s.sounds.clone()).unwrap_or_default(),
            last_stats: last.map(|s| s.stats).unwrap_or_default(),
            totals: g.totals,
            config_version: g.version,
            active_version: g.active_version,
            staged_version: g.staged.as_ref().map(|(_, v)| *v),
            logging_degraded: g.logging_degraded,
            subscribers: g.subscribers.len(),
            running: g.running,
        }
    }

    /// Latest accepted configuration and its version.
    pub fn config(&self) -> (EngineConfig, u64) {
        let g = self.lock();
        (g.latest().config.clone(), g.version)
    }

    /// Configuration the current window runs under.
    pub fn active(&self) -> (Arc<Validated>, u64) {
        let g = self.lock();
        (Arc::clone(&g.active), g.active_version)
    }

    /// Validates and stages a patch on top of the latest accepted config.
    pub fn put_config(&self, patch: &ConfigPatch) -> Result<Accepted, ControlError> {
        let mut g = self.lock();
        if let Some(base) = patch.base_version {
            if base != g.version {
                return Err(ControlError::Conflict { base, current: g.version });
            }
        }
        let next = patch.apply(&g.latest().config).map_err(|errors| ControlError::Invalid { errors })?;
        let validated = next.validate(&g.catalog).map_err(|errors| ControlError::Invalid { errors })?;
        g.version += 1;
        let version = g.version;
        g.staged = Some((Arc::new(validated), version));
        Ok(Accepted { version, activates_at_window: g.window_index + 1 })
    }

    fn require_rule(&self, rule: &str) -> Result<(), ControlError> {
        let g = self.lock();
        if g.latest().rules.get(rule).is_some() {
            Ok(())
        } else {
            Err(ControlError::UnknownRule { rule: rule.to_string() })
        }
    }

    pub fn set_gain(&self, rule: &str, gain: f64) -> Result<Accepted, ControlError> {
        self.require_rule(rule)?;
        let mut gains = self.config().0.gains;
        gains.insert(rule.to_string(), gain);
        self.put_config(&ConfigPatch { gains: Some(gains), ..Default::default() })
    }

    pub fn set_muted(&self, rule: &str, muted: bool) -> Result<Accepted, ControlError> {
        self.require_rule(rule)?;
        let mut set = self.config().0.muted;
        if muted {
            set.insert(rule.to_string());
        } else {
            set.remove(rule);
        }
        self.put_config(&ConfigPatch { muted: Some(set), ..Default::default() })
    }

    /// Flips the mute state and returns the new one.
    pub fn toggle_mute(&self, rule: &str) -> Result<(Accepted, bool), ControlError> {
        self.require_rule(rule)?;
        let now = !self.config().0.muted.contains(rule);
        self.set_muted(rule, now).map(|a| (a, now))
    }

    pub fn set_sound(&self, rule: &str, sound: &str) -> Result<Accepted, ControlError> {
        self.require_rule(rule)?;
        let mut sounds = self.config().0.sounds;
        sounds.insert(rule.to_string(), sound.to_string());
        self.put_config(&ConfigPatch { sounds: Some(sounds), ..Default::default() })
    }

    pub fn set_window_period(&self, seconds: f64) -> Result<Accepted, ControlError> {
        self.put_config(&ConfigPatch { window_period_s: Some(seconds), ..Default::default() })
    }

    /// Called by the engine when window `next_window` begins. Returns the
    /// configuration that window must use.
    pub fn rotate(&self, next_window: u64) -> (Arc<Validated>, u64) {
        let mut g = self.lock();
        g.window_index = next_window;
        if let Some((v, version)) = g.staged.take() {
            g.active = v;
            g.active_version = version;
        }
        (Arc::clone(&g.active), g.active_version)
    }

    /// Records a finished window and fans its summary out. Subscribers whose
    /// buffer is full are disconnected.
    pub fn publish(&self, report: &WindowReport, validated: &Validated, version: u64) {
        let summary = Arc::new(WindowSummary::from_report(report, validated, version));
        let mut g = self.lock();
        g.totals.windows += 1;
        g.totals.packets += report.stats.packets;
        g.totals.malformed += report.stats.malformed;
        g.totals.dropped += report.stats.dropped;
        g.totals.events += report.events.len() as u64;
        g.last = Some(Arc::clone(&summary));
        g.subscribers.retain(|s| match s.tx.try_send(Arc::clone(&summary)) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                s.slow.store(true, Ordering::Release);
                false
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
    }

    pub fn set_logging_degraded(&self) {
        self.lock().logging_degraded = true;
    }

    pub fn subscribe(&self, buffer: usize) -> Subscription {
        let (tx, rx) = bounded(buffer.max(1));
        let slow = Arc::new(AtomicBool::new(false));
        let mut g = self.lock();
        if g.running {
            g.subscribers.push(Subscriber { tx, slow: Arc::clone(&slow) });
        }
        Subscription { rx, slow }
    }

    /// Ends every feed.
    pub fn shutdown(&self) {
        let mut g = self.lock();
        g.running = false;
        g.subscribers.clear();
    }

    pub fn is_running(&self) -> bool {
        self.lock().running
    }
}
