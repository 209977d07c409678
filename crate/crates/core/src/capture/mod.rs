//! Frame acquisition: live interface, PCAP file, or an in-memory stream, each
//! filtered down to TCP and ICMP echo [`PacketSummary`] values.

pub mod decode;
#[cfg(target_os = "linux")]
mod live;
mod pcap;

use std::path::PathBuf;

pub use decode::{decode_ethernet, Decoded};
#[cfg(target_os = "linux")]
pub use live::LiveSource;
pub use pcap::{write_pcap, PcapFileSource};

use crate::packet::{HomeNetworks, PacketSummary};

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("cannot open {locator}: {source}")]
    Open {
        locator: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: unsupported link type {1} (Ethernet required)")]
    LinkType(String, String),
    #[error("{0}: not a pcap file: {1}")]
    Format(String, String),
    #[error("live capture is not supported on this platform")]
    Unsupported,
    #[error("capture read failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Where frames come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PacketSource {
    Live { interface: String },
    PcapFile { path: PathBuf },
    Synthetic,
}

/// One raw frame and its capture time.
#[derive(Debug, Clone)]
pub struct RawFrame {
    pub timestamp_us: u64,
    pub data: Vec<u8>,
}

/// A producer of raw link-layer frames.
pub trait FrameSource: Send {
    /// `Ok(None)` means end of stream (end of file, or shutdown for live).
    fn next_frame(&mut self) -> Result<Option<RawFrame>, CaptureError>;
}

/// Frames replayed from memory, typically produced by the traffic generator.
pub struct SyntheticSource {
    frames: std::vec::IntoIter<RawFrame>,
}

impl SyntheticSource {
    pub fn new(frames: Vec<RawFrame>) -> Self {
        SyntheticSource { frames: frames.into_iter() }
    }
}

impl FrameSource for SyntheticSource {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, CaptureError> {
        Ok(self.frames.next())
    }
}

/// What the filter hands downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CaptureEvent {
    Packet(PacketSummary),
    /// A frame with a truncated or inconsistent header, kept only so the
    /// malformed count lands in the right window.
    Malformed {
        timestamp_us: u64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptureCounters {
    pub frames: u64,
    pub admitted: u64,
    pub skipped: u64,
    pub malformed: u64,
}

/// Decoding filter over a [`FrameSource`].
pub struct Capture {
    source: Box<dyn FrameSource>,
    home: HomeNetworks,
    counters: CaptureCounters,
}

impl Capture {
    pub fn new(source: Box<dyn FrameSource>, home: HomeNetworks) -> Self {
        Capture { source, home, counters: CaptureCounters::default() }
    }

    /// Opens the given source. Synthetic sources are created directly with
    /// [`Capture::new`].
    pub fn open(source: &PacketSource, home: HomeNetworks) -> Result<Self, CaptureError> {
        let frames: Box<dyn FrameSource> = match source {
            PacketSource::PcapFile { path } => Box::new(PcapFileSource::open(path)?),
            #[cfg(target_os = "linux")]
            PacketSource::Live { interface } => Box::new(LiveSource::open(interface)?),
            #[cfg(not(target_os = "linux"))]
            PacketSource::Live { .. } => return Err(CaptureError::Unsupported),
            PacketSource::Synthetic => Box::new(SyntheticSource::new(Vec::new())),
        };
        Ok(Capture::new(frames, home))
    }

    /// Next admitted packet or malformed marker; skipped frames are consumed
    /// silently.
    pub fn next_event(&mut self) -> Result<Option<CaptureEvent>, CaptureError> {
        while let Some(frame) = self.source.next_frame()? {
            self.counters.frames += 1;
            match decode_ethernet(&frame.data, frame.timestamp_us, &self.home) {
                Decoded::Packet(p) => {
                    self.counters.admitted += 1;
                    return Ok(Some(CaptureEvent::Packet(p)));
                }
                Decoded::Skipped => self.counters.skipped += 1,
                Decoded::Malformed => {
                    self.counters.malformed += 1;
                    return Ok(Some(CaptureEvent::Malformed { timestamp_us: frame.timestamp_us }));
                }
            }
        }
        Ok(None)
    }

    /// Next admitted packet, skipping everything else.
    pub fn next_packet(&mut self) -> Result<Option<PacketSummary>, CaptureError> {
        while let Some(ev) = self.next_event()? {
            if let CaptureEvent::Packet(p) = ev {
                return Ok(Some(p));
            }
        }
        Ok(None)
    }

    pub fn counters(&self) -> CaptureCounters {
        self.counters
    }
}

impl Iterator for Capture {
    type Item = Result<CaptureEvent, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_event().transpose()
    }
}
