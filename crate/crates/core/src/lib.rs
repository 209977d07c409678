//! Network traffic sonification: packets are aggregated into per-window flow
//! counters, threshold rules over those counters raise events, and events
//! become overlapping natural sounds.

pub mod capture;
pub mod config;
pub mod control;
pub mod engine;
pub mod features;
pub mod flowtable;
pub mod logging;
pub mod metrics;
pub mod packet;
pub mod rules;
pub mod soundscape;
pub mod trafficgen;

pub use capture::{Capture, CaptureError, CaptureEvent, PacketSource, RawFrame};
pub use config::{ConfigError, ConfigPatch, EngineConfig, Validated};
pub use control::{ControlError, ControlPlane, EngineState, WindowSummary};
pub use engine::{run_offline, ClosedWindow, EngineError, OfflineOptions, Pipeline, RunSummary};
pub use features::{combine, FeatureSpace, FeatureView, WindowCounts};
pub use flowtable::{Bucket, FlowKey, IpFlowKey, PacketType, PacketTypeCounters, WindowSnapshot, WindowState};
pub use logging::{EventRecord, LogWriter, WindowReport, WindowStats};
pub use metrics::{score, ConfusionCounts, Metrics};
pub use packet::{Direction, HomeNetworks, PacketSummary, Protocol, TcpFlags};
pub use rules::{Category, EventInstance, RuleSet, RuleSettings, SoundCatalog};
pub use soundscape::{AssetLibrary, PlaybackPlan, Renderer};
pub use trafficgen::{generate, LabelFile, ScenarioKind, ScenarioSpec};
