use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use pcap_file::pcap::{PcapHeader, PcapPacket, PcapReader, PcapWriter};
use pcap_file::{DataLink, PcapError};

use super::{CaptureError, FrameSource, RawFrame};

/// libpcap container reader; micro- and nanosecond variants both decode to
/// microsecond timestamps.
pub struct PcapFileSource {
    reader: PcapReader<BufReader<File>>,
    name: String,
}

impl PcapFileSource {
    pub fn open(path: &Path) -> Result<Self, CaptureError> {
        let name = path.display().to_string();
        let file = File::open(path).map_err(|source| CaptureError::Open { locator: name.clone(), source })?;
        let reader = PcapReader::new(BufReader::with_capacity(1 << 16, file)).map_err(|e| match e {
            PcapError::IoError(source) => CaptureError::Open { locator: name.clone(), source },
            other => CaptureError::Format(name.clone(), other.to_string()),
        })?;
        let link = reader.header().datalink;
        if link != DataLink::ETHERNET {
            return Err(CaptureError::LinkType(name, format!("{link:?}")));
        }
        Ok(PcapFileSource { reader, name })
    }
}

impl FrameSource for PcapFileSource {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, CaptureError> {
        match self.reader.next_packet() {
            None => Ok(None),
            Some(Ok(pkt)) => {
                Ok(Some(RawFrame { timestamp_us: pkt.timestamp.as_micros() as u64, data: pkt.data.into_owned() }))
            }
            // A record cut off at end of file ends the stream.
            Some(Err(PcapError::IncompleteBuffer)) => Ok(None),
            Some(Err(PcapError::IoError(e))) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                tracing::warn!(file = %self.name, "truncated final pcap record ignored");
                Ok(None)
            }
            Some(Err(PcapError::IoError(e))) => Err(CaptureError::Io(e)),
            Some(Err(e)) => {
                tracing::warn!(file = %self.name, error = %e, "stopping at corrupt pcap record");
                Ok(None)
            }
        }
    }
}

/// Writes frames as a microsecond-resolution Ethernet pcap.
pub fn write_pcap<'a, W, I>(writer: W, frames: I) -> Result<W, std::io::Error>
where
    W: Write,
    I: IntoIterator<Item = (u64, &'a [u8])>,
{
    let header = PcapHeader { datalink: DataLink::ETHERNET, ..PcapHeader::default() };
    let mut out = PcapWriter::with_header(BufWriter::new(writer), header).map_err(to_io)?;
    for (ts_us, data) in frames {
        let pkt = PcapPacket::new(Duration::from_micros(ts_us), data.len() as u32, data);
        out.write_packet(&pkt).map_err(to_io)?;
    }
    out.into_writer().into_inner().map_err(|e| e.into_error())
}

fn to_io(e: PcapError) -> std::io::Error {
    match e {
        PcapError::IoError(e) => e,
        other => std::io::Error::other(other.to_string()),
    }
}
