//! Subcommands and their wiring.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use netsonify::capture::{FrameSource, PcapFileSource};
use netsonify::config::OutputMode;
use netsonify::engine::live::{Clock, LiveEngine, LiveOptions, PacedSource};
use netsonify::logging::{parse_event_log, EVENT_LOG};
use netsonify::metrics::{confusion_for, percent, WindowSounds};
use netsonify::soundscape::{AudioSink, NullSink, PipeSink};
use netsonify::trafficgen::{ScanMode, ScenarioKind, ScenarioSpec};
use netsonify::{
    generate, run_offline, score, AssetLibrary, Capture, ConfusionCounts, ControlPlane, EngineConfig, LabelFile,
    LogWriter, OfflineOptions, Pipeline, RuleSettings, SoundCatalog, Validated,
};

/// Exit statuses; see the README.
pub mod exit {
    pub const OK: u8 = 0;
    pub const RUNTIME: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const SOURCE: u8 = 4;
    pub const ASSETS: u8 = 5;
    pub const OUTPUT: u8 = 6;
}

#[derive(Debug, Parser)]
#[command(name = "netsonify", version, about = "Hear your network: flow-level events rendered as natural sounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Listen to a live interface (or replay a capture at its recorded pace).
    Monitor(MonitorArgs),
    /// Process a capture as fast as possible into a WAV file and logs.
    Render(RenderArgs),
    /// Generate a labelled synthetic capture.
    Gen(GenArgs),
    /// Compute detection metrics from confusion counts or event logs.
    Score(ScoreArgs),
    /// Check a TOML config or a rules document.
    ValidateConfig(ValidateArgs),
    /// Write the built-in placeholder samples as WAV files.
    ExportAssets(ExportArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct EngineArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Home network CIDR block (repeatable); overrides the config file.
    #[arg(long = "home", value_name = "CIDR")]
    pub home: Vec<String>,
    /// Window period in seconds.
    #[arg(long = "window", value_name = "SECONDS")]
    pub window: Option<f64>,
    /// Directory of WAV samples; file stems are sound ids.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Directory for ipflow.log, trafficflow.log and events.log.
    #[arg(long)]
    pub logs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Network interface to capture from.
    #[arg(long, conflicts_with = "pcap", required_unless_present = "pcap")]
    pub iface: Option<String>,
    /// Replay a capture file at its recorded timing.
    #[arg(long)]
    pub pcap: Option<PathBuf>,
    /// Control plane address.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Player command receiving raw s16le 44.1 kHz stereo on stdin,
    /// e.g. "aplay -q -f cd -t raw".
    #[arg(long)]
    pub audio_cmd: Option<String>,
    /// Do not produce audio.
    #[arg(long)]
    pub no_audio: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub pcap: PathBuf,
    /// Output WAV path.
    #[arg(long = "render", value_name = "WAV")]
    pub render: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// NORMAL, PING, SYN_SCAN, FIN_SCAN, XMAS_SCAN, NULL_SCAN, SYN_FLOOD or DDOS_SPOOFED.
    #[arg(long)]
    pub scenario: ScenarioKind,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output capture path.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Label sidecar path (default: <out>.labels.json).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long = "window", default_value_t = 1.0)]
    pub window: f64,
    #[arg(long, default_value_t = 1)]
    pub windows: u32,
    #[arg(long)]
    pub victim: Option<std::net::IpAddr>,
    #[arg(long)]
    pub attacker: Option<std::net::IpAddr>,
    #[arg(long)]
    pub ports: Option<u32>,
    #[arg(long)]
    pub open_ratio: Option<f64>,
    /// SYN scan variant: half-open or connect.
    #[arg(long, value_parser = parse_scan_mode)]
    pub scan_mode: Option<ScanMode>,
    #[arg(long)]
    pub flood_packets: Option<u32>,
    #[arg(long)]
    pub spoofed_sources: Option<u32>,
    #[arg(long)]
    pub connections: Option<u32>,
    #[arg(long)]
    pub pings: Option<u32>,
}

fn parse_scan_mode(s: &str) -> Result<ScanMode, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "half-open" | "halfopen" | "syn" => Ok(ScanMode::HalfOpen),
        "connect" => Ok(ScanMode::Connect),
        _ => Err(format!("unknown scan mode {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, requires_all = ["tn", "fp", "fn_"], conflicts_with = "events")]
    pub tp: Option<u64>,
    #[arg(long)]
    pub tn: Option<u64>,
    #[arg(long)]
    pub fp: Option<u64>,
    #[arg(long = "fn", id = "fn_")]
    pub fn_: Option<u64>,
    /// Event log (a file or a log directory); pair each with --labels.
    #[arg(long, requires = "labels")]
    pub events: Vec<PathBuf>,
    #[arg(long)]
    pub labels: Vec<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// A `.toml` engine config, or a rules document.
    pub path: PathBuf,
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub dir: PathBuf,
}

/// An error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Monitor(a) => monitor(a),
        Command::Render(a) => render(a),
        Command::Gen(a) => gen(a),
        Command::Score(a) => score_cmd(a),
        Command::ValidateConfig(a) => validate(a),
        Command::ExportAssets(a) => AssetLibrary::placeholder()
            .export(&a.dir)
            .map(|_| println!("wrote placeholder samples to {}", a.dir.display()))
            .map_err(|e| Failure::new(exit::OUTPUT, e.to_string())),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Placeholder samples overlaid with any files from `dir`.
pub fn load_library(dir: Option<&Path>) -> Result<AssetLibrary, Failure> {
    let mut lib = AssetLibrary::placeholder();
    if let Some(dir) = dir {
        let user = AssetLibrary::load_dir(dir).map_err(|e| Failure::new(exit::ASSETS, e.to_string()))?;
        let mut merged = AssetLibrary::new();
        for id in lib.ids().map(str::to_owned).collect::<Vec<_>>() {
            if user.get(&id).is_none() {
                merged.insert(lib.get(&id).cloned().expect("listed")).expect("unique");
            }
        }
        for id in user.ids() {
            merged.insert(user.get(id).cloned().expect("listed")).expect("unique");
        }
        lib = merged;
    }
    Ok(lib)
}

/// Config file merged with command-line overrides, validated.
pub fn resolve_config(args: &EngineArgs) -> Result<(Validated, AssetLibrary), Failure> {
    let mut cfg = match &args.config {
        Some(p) => EngineConfig::load(p).map_err(|e| Failure::new(exit::CONFIG, e.to_string()))?,
        None => EngineConfig::default(),
    };
    if !args.home.is_empty() {
        cfg.home_networks = args.home.clone();
    }
    if let Some(w) = args.window {
        cfg.window_period_s = w;
    }
    if args.assets.is_some() {
        cfg.assets = args.assets.clone();
    }
    if args.logs.is_some() {
        cfg.logs = args.logs.clone();
    }
    let lib = load_library(cfg.assets.as_deref())?;
    let validated = cfg.validate(&lib.catalog()).map_err(|errs| {
        let lines: Vec<String> = errs.iter().map(|e| format!("  {e}")).collect();
        Failure::new(exit::CONFIG, format!("invalid configuration:\n{}", lines.join("\n")))
    })?;
    Ok((validated, lib))
}

fn render(a: RenderArgs) -> Outcome {
    let (validated, lib) = resolve_config(&a.engine)?;
    let source = PcapFileSource::open(&a.pcap).map_err(|e| Failure::new(exit::SOURCE, e.to_string()))?;
    let mut capture = Capture::new(Box::new(source), validated.home.clone());
    let opts = OfflineOptions {
        logs: validated.config.logs.clone(),
        log_rotate_bytes: validated.config.log_rotate_bytes,
        wav: a.render.clone(),
    };
    let pipeline = Pipeline::new(Arc::new(validated));
    let summary = run_offline(&mut capture, pipeline, Arc::new(lib), &opts, |_| {}).map_err(|e| match e {
        netsonify::EngineError::Capture(e) => Failure::new(exit::SOURCE, e.to_string()),
        other => Failure::new(exit::OUTPUT, other.to_string()),
    })?;
    println!(
        "windows={} packets={} malformed={} skipped={} events={}",
        summary.windows, summary.packets, summary.malformed, summary.skipped, summary.events
    );
    if let Some(r) = summary.render {
        println!("voices_started={} voices_stolen={} frames={}", r.voices_started, r.voices_stolen, r.frames_written);
        if r.missing_assets > 0 {
            eprintln!("warning: {} plan entries had no sample", r.missing_assets);
        }
    }
    if summary.logging_degraded {
        return Err(Failure::new(exit::OUTPUT, "log output failed part-way"));
    }
    Ok(())
}

fn monitor(a: MonitorArgs) -> Outcome {
    let (validated, lib) = resolve_config(&a.engine)?;
    let stop = Arc::new(AtomicBool::new(false));
    let home = validated.home.clone();
    let (frames, clock): (Box<dyn FrameSource>, Clock) = match (&a.iface, &a.pcap) {
        (Some(iface), _) => (open_live(iface)?, Clock::Wall),
        (None, Some(path)) => {
            let src = PcapFileSource::open(path).map_err(|e| Failure::new(exit::SOURCE, e.to_string()))?;
            let paced = PacedSource::new(Box::new(src), Arc::clone(&stop));
            let clock = Clock::Replay(paced.clock());
            (Box::new(paced), clock)
        }
        (None, None) => return Err(Failure::new(exit::USAGE, "one of --iface or --pcap is required")),
    };
    let wall_origin = a.iface.is_some();

    let audio_cmd = a.audio_cmd.clone().or_else(|| validated.config.audio_cmd.clone());
    let sink: Box<dyn AudioSink> = match (a.no_audio, validated.config.output, audio_cmd) {
        (false, OutputMode::Device, Some(cmd)) => {
            Box::new(PipeSink::spawn(&cmd).map_err(|e| Failure::new(exit::OUTPUT, format!("audio command: {e}")))?)
        }
        (false, OutputMode::Device, None) => {
            eprintln!("note: no --audio-cmd given; running silently (events still logged and streamed)");
            Box::new(NullSink)
        }
        _ => Box::new(NullSink),
    };
    let logs = match &validated.config.logs {
        Some(dir) => Some(
            LogWriter::create(dir)
                .map_err(|e| Failure::new(exit::OUTPUT, format!("logs: {e}")))?
                .with_rotation(validated.config.log_rotate_bytes),
        ),
        None => None,
    };

    let catalog: SoundCatalog = lib.catalog();
    let control = ControlPlane::new(validated, catalog);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new(exit::RUNTIME, e.to_string()))?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(a.listen))
        .map_err(|e| Failure::new(exit::OUTPUT, format!("cannot listen on {}: {e}", a.listen)))?;
    let bound = listener.local_addr().unwrap_or(a.listen);
    eprintln!("control plane on http://{bound}");

    let engine = LiveEngine::spawn(
        frames,
        home,
        clock,
        Arc::clone(&control),
        Arc::new(lib),
        sink,
        logs,
        Arc::clone(&stop),
        LiveOptions { wall_origin, ..Default::default() },
    );

    let app = crate::http::router(Arc::clone(&control));
    let server_control = Arc::clone(&control);
    let ctrl_c_stop = Arc::clone(&stop);
    runtime.spawn(async move {
        let _ = tokio::signal::ctrl_c().await;
        ctrl_c_stop.store(true, Ordering::Relaxed);
    });
    runtime.spawn(async move {
        let shutdown = async move {
            while server_control.is_running() {
                tokio::time::sleep(std::time::Duration::from_millis(200)).await;
            }
        };
        if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
            tracing::error!("control plane stopped: {e}");
        }
    });

    let summary = engine.join().map_err(|e| Failure::new(exit::SOURCE, e.to_string()))?;
    runtime.shutdown_timeout(std::time::Duration::from_secs(1));
    println!(
        "windows={} packets={} dropped={} events={}",
        summary.windows, summary.packets, summary.dropped, summary.events
    );
    Ok(())
}

#[cfg(target_os = "linux")]
fn open_live(iface: &str) -> Result<Box<dyn FrameSource>, Failure> {
    netsonify::capture::LiveSource::open(iface)
        .map(|s| Box::new(s) as Box<dyn FrameSource>)
        .map_err(|e| Failure::new(exit::SOURCE, e.to_string()))
}

#[cfg(not(target_os = "linux"))]
fn open_live(_iface: &str) -> Result<Box<dyn FrameSource>, Failure> {
    Err(Failure::new(exit::SOURCE, "live capture is only supported on Linux"))
}

fn gen(a: GenArgs) -> Outcome {
    let mut spec = ScenarioSpec::new(a.scenario, a.seed);
    spec.window_period_s = a.window;
    spec.duration_s = a.window * 0.8;
    spec.windows = a.windows;
    macro_rules! set {
        ($($f:ident),*) => {$(if let Some(v) = a.$f { spec.$f = v; })*};
    }
    set!(victim, attacker, ports, open_ratio, scan_mode, flood_packets, spoofed_sources, connections, pings);
    let g = generate(&spec).map_err(|e| Failure::new(exit::USAGE, e.to_string()))?;
    let file = fs::File::create(&a.out).map_err(|e| Failure::new(exit::OUTPUT, format!("{}: {e}", a.out.display())))?;
    g.write_pcap(file).map_err(|e| Failure::new(exit::OUTPUT, e.to_string()))?;
    let labels = a.labels.unwrap_or_else(|| labels_path_for(&a.out));
    g.label.write(&labels).map_err(|e| Failure::new(exit::OUTPUT, format!("{}: {e}", labels.display())))?;
    println!("{} packets -> {} (labels: {})", g.frames.len(), a.out.display(), labels.display());
    Ok(())
}

pub fn labels_path_for(pcap: &Path) -> PathBuf {
    let mut s = pcap.as_os_str().to_owned();
    s.push(".labels.json");
    PathBuf::from(s)
}

/// Sounds per window from an events.log (or a directory holding one).
pub fn read_window_sounds(path: &Path) -> Result<WindowSounds, Failure> {
    let file = if path.is_dir() { path.join(EVENT_LOG) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| Failure::new(exit::SOURCE, format!("{}: {e}", file.display())))?;
    let records = parse_event_log(&text)
        .map_err(|(line, e)| Failure::new(exit::SOURCE, format!("{}:{line}: {e}", file.display())))?;
    let mut out = WindowSounds::new();
    for r in records {
        let entry = out.entry(r.window).or_default();
        if !entry.iter().any(|(s, _)| *s == r.sound) {
            entry.push((r.sound, r.category));
        }
    }
    Ok(out)
}

fn score_cmd(a: ScoreArgs) -> Outcome {
    let counts = if let (Some(tp), Some(tn), Some(fp), Some(fn_)) = (a.tp, a.tn, a.fp, a.fn_) {
        ConfusionCounts::new(tp, tn, fp, fn_)
    } else {
        if a.events.is_empty() || a.events.len() != a.labels.len() {
            return Err(Failure::new(exit::USAGE, "give --tp/--tn/--fp/--fn, or matching --events/--labels pairs"));
        }
        let mut c = ConfusionCounts::default();
        for (ev, lb) in a.events.iter().zip(&a.labels) {
            let heard = read_window_sounds(ev)?;
            let label =
                LabelFile::read(lb).map_err(|e| Failure::new(exit::SOURCE, format!("{}: {e}", lb.display())))?;
            c += confusion_for(&label, &heard);
        }
        c
    };
    let m = score(counts);
    if a.json {
        let v = serde_json::json!({ "counts": counts, "metrics": m });
        println!("{}", serde_json::to_string_pretty(&v).expect("serializes"));
    } else {
        println!("TP={} TN={} FP={} FN={}", counts.tp, counts.tn, counts.fp, counts.fn_);
        for (name, v) in m.rows() {
            println!("{name:<10} {:>10}", percent(v));
        }
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Outcome {
    let lib = load_library(a.assets.as_deref())?;
    let catalog = lib.catalog();
    let text =
        fs::read_to_string(&a.path).map_err(|e| Failure::new(exit::CONFIG, format!("{}: {e}", a.path.display())))?;
    let is_toml = a.path.extension().is_some_and(|e| e == "toml");
    let errors: Vec<String> = if is_toml {
        match EngineConfig::from_toml(&text) {
            Err(e) => vec![e.to_string()],
            Ok(mut cfg) => {
                if cfg.home_networks.is_empty() {
                    // Allowed in a file; supplied by --home at run time.
                    cfg.home_networks = vec!["0.0.0.0/32".into()];
                }
                cfg.validate(&catalog).err().unwrap_or_default().iter().map(|e| e.to_string()).collect()
            }
        }
    } else {
        let settings = RuleSettings { document: text, ..Default::default() };
        netsonify::RuleSet::build(&settings, &catalog)
            .map(|_| ())
            .err()
            .unwrap_or_default()
            .iter()
            .map(|e| e.to_string())
            .collect()
    };
    if errors.is_empty() {
        println!("{}: ok", a.path.display());
        Ok(())
    } else {
        for e in &errors {
            eprintln!("{}: {e}", a.path.display());
        }
        Err(Failure::new(exit::CONFIG, format!("{} error(s)", errors.len())))
    }
}
