//! Turning window events into audio: playback plans, the mixer, and sinks.

pub mod assets;
pub mod mixer;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::Arc;

use serde::Serialize;

pub use assets::{AssetError, AssetLibrary, SoundAsset, ENGINE_RATE};
pub use mixer::{soft_clip, Mixer, MixerStats, MAX_VOICES};

use crate::rules::{Category, EventInstance, RuleSet};

/// Frames rendered per mixer call.
pub const BLOCK_FRAMES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanEntry {
    pub sound_id: String,
    pub gain: f32,
    pub category: Category,
}

/// Sounds to start at the beginning of the window after `window_index`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PlaybackPlan {
    pub window_index: u64,
    /// One entry per distinct sound, sorted by sound id.
    pub entries: Vec<PlanEntry>,
}

impl PlaybackPlan {
    /// Collapses a window's events to one entry per sound id, at the largest
    /// effective gain among the rules that fired it. Silent entries (muted
    /// rules, zero gain) are dropped.
    pub fn from_events(window_index: u64, events: &[EventInstance], rules: &RuleSet) -> Self {
        let mut by_sound: BTreeMap<&str, PlanEntry> = BTreeMap::new();
        for ev in events {
            let Some(rule) = rules.get(&ev.rule_id) else { continue };
            if !rule.enabled {
                continue;
            }
            let gain = rule.effective_gain(rules.master_gain()) as f32;
            if gain <= 0.0 {
                continue;
            }
            by_sound
                .entry(ev.sound_id.as_str())
                .and_modify(|e| e.gain = e.gain.max(gain))
                .or_insert_with(|| PlanEntry { sound_id: ev.sound_id.clone(), gain, category: ev.category });
        }
        PlaybackPlan { window_index, entries: by_sound.into_values().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn us_to_frames(us: u64) -> u64 {
    (u128::from(us) * u128::from(ENGINE_RATE) / 1_000_000) as u64
}

/// Destination for interleaved stereo f32 blocks.
pub trait AudioSink: Send {
    fn write(&mut self, block: &[f32]) -> io::Result<()>;
    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
    /// Whether writes block in real time (a device or player pipe).
    fn paced(&self) -> bool {
        false
    }
}

/// Discards audio.
#[derive(Debug, Default)]
pub struct NullSink;

impl AudioSink for NullSink {
    fn write(&mut self, _block: &[f32]) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps every sample; for tests and analysis.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub samples: Vec<f32>,
}

impl AudioSink for MemorySink {
    fn write(&mut self, block: &[f32]) -> io::Result<()> {
        self.samples.extend_from_slice(block);
        Ok(())
    }
}

/// 16-bit stereo WAV at the engine rate.
pub struct WavSink {
    writer: Option<hound::WavWriter<BufWriter<File>>>,
}

impl WavSink {
    pub fn create(path: &Path) -> io::Result<Self> {
        let writer = hound::WavWriter::create(path, assets::stereo_spec()).map_err(hound_io)?;
        Ok(WavSink { writer: Some(writer) })
    }
}

fn hound_io(e: hound::Error) -> io::Error {
    match e {
        hound::Error::IoError(e) => e,
        other => io::Error::other(other),
    }
}

impl AudioSink for WavSink {
    fn write(&mut self, block: &[f32]) -> io::Result<()> {
        let w = self.writer.as_mut().ok_or_else(|| io::Error::other("wav sink finished"))?;
        for s in block {
            w.write_sample(assets::to_i16(*s)).map_err(hound_io)?;
        }
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        match self.writer.take() {
            Some(w) => w.finalize().map_err(hound_io),
            None => Ok(()),
        }
    }
}

/// Streams signed 16-bit little-endian stereo to a player's stdin, e.g.
/// `aplay -q -f cd -t raw` or `pw-cat --playback --format s16 -`.
pub struct PipeSink {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    buf: Vec<u8>,
}

impl PipeSink {
    pub fn spawn(command_line: &str) -> io::Result<Self> {
        let mut parts = command_line.split_whitespace();
        let program = parts.next().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty audio command"))?;
        let mut child = Command::new(program).args(parts).stdin(Stdio::piped()).stdout(Stdio::null()).spawn()?;
        let stdin = child.stdin.take().map(BufWriter::new);
        Ok(PipeSink { child, stdin, buf: Vec::with_capacity(BLOCK_FRAMES * 4) })
    }
}

impl AudioSink for PipeSink {
    fn write(&mut self, block: &[f32]) -> io::Result<()> {
        self.buf.clear();
        for s in block {
            self.buf.extend_from_slice(&assets::to_i16(*s).to_le_bytes());
        }
        match self.stdin.as_mut() {
            Some(w) => w.write_all(&self.buf),
            None => Err(io::Error::from(io::ErrorKind::BrokenPipe)),
        }
    }

    fn finish(&mut self) -> io::Result<()> {
        if let Some(mut w) = self.stdin.take() {
            w.flush()?;
        }
        self.child.wait().map(|_| ())
    }

    fn paced(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RenderStats {
    pub frames_written: u64,
    pub voices_started: u64,
    pub voices_stolen: u64,
    /// Plan entries whose sound id had no loaded asset.
    pub missing_assets: u64,
}

/// Drives a mixer along a frame timeline into a sink. Voices are started at
/// exact frame positions; nothing is written ahead of the latest schedule.
pub struct Renderer {
    mixer: Mixer,
    library: Arc<AssetLibrary>,
    sink: Box<dyn AudioSink>,
    written: u64,
    block: Vec<f32>,
    missing: u64,
    starts: Vec<(u64, String)>,
}

impl Renderer {
    pub fn new(library: Arc<AssetLibrary>, sink: Box<dyn AudioSink>) -> Self {
        Renderer {
            mixer: Mixer::new(),
            library,
            sink,
            written: 0,
            block: vec![0.0; BLOCK_FRAMES * 2],
            missing: 0,
            starts: Vec::new(),
        }
    }

    pub fn set_library(&mut self, library: Arc<AssetLibrary>) {
        self.library = library;
    }

    pub fn frames_written(&self) -> u64 {
        self.written
    }

    /// Renders until `frame` frames have been written.
    pub fn advance_to(&mut self, frame: u64) -> io::Result<()> {
        while self.written < frame {
            let n = ((frame - self.written) as usize).min(BLOCK_FRAMES);
            let out = &mut self.block[..n * 2];
            self.mixer.render(out);
            self.sink.write(out)?;
            self.written += n as u64;
        }
        Ok(())
    }

    /// Starts every entry of `plan` at `at_frame` (or now, if already past).
    pub fn schedule(&mut self, at_frame: u64, plan: &PlaybackPlan) -> io::Result<()> {
        self.advance_to(at_frame)?;
        for entry in &plan.entries {
            match self.library.get(&entry.sound_id) {
                Some(asset) => {
                    self.mixer.start(asset, entry.gain, 0);
                    self.starts.push((self.written, entry.sound_id.clone()));
                }
                None => self.missing += 1,
            }
        }
        Ok(())
    }

    /// (frame, sound id) of every voice started so far.
    pub fn voice_starts(&self) -> &[(u64, String)] {
        &self.starts
    }

    pub fn active_voices(&self) -> usize {
        self.mixer.active_voices()
    }

    /// Frames until the current voices have all finished.
    pub fn tail_frames(&self) -> u64 {
        self.mixer.remaining_frames() as u64
    }

    pub fn stats(&self) -> RenderStats {
        let m = self.mixer.stats();
        RenderStats {
            frames_written: self.written,
            voices_started: m.voices_started,
            voices_stolen: m.voices_stolen,
            missing_assets: self.missing,
        }
    }

    /// Renders to at least `min_end_frame` and until every voice has ended,
    /// then closes the sink.
    pub fn finish(mut self, min_end_frame: u64) -> io::Result<RenderStats> {
        let end = min_end_frame.max(self.written + self.tail_frames());
        self.advance_to(end)?;
        self.sink.finish()?;
        Ok(self.stats())
    }
}
