//! Promiscuous capture through a Linux `AF_PACKET` socket.

use std::ffi::CString;
use std::io;
use std::os::fd::{AsRawFd, FromRawFd, OwnedFd};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use super::{CaptureError, FrameSource, RawFrame};

const ETH_P_ALL: u16 = 0x0003;
const SNAPLEN: usize = 256;

pub struct LiveSource {
    fd: OwnedFd,
    buf: Vec<u8>,
    stop: Arc<AtomicBool>,
}

impl LiveSource {
    pub fn open(interface: &str) -> Result<Self, CaptureError> {
        let open_err = |source: io::Error| CaptureError::Open { locator: interface.to_string(), source };
        let name = CString::new(interface)
            .map_err(|_| open_err(io::Error::new(io::ErrorKind::InvalidInput, "interface name contains NUL")))?;
        // SAFETY: plain libc calls; every return value is checked and the
        // descriptor is owned by `OwnedFd` from the moment it exists.
        unsafe {
            let ifindex = libc::if_nametoindex(name.as_ptr());
            if ifindex == 0 {
                return Err(open_err(io::Error::last_os_error()));
            }
            let raw = libc::socket(libc::AF_PACKET, libc::SOCK_RAW, i32::from(ETH_P_ALL.to_be()));
            if raw < 0 {
                return Err(open_err(io::Error::last_os_error()));
            }
            let fd = OwnedFd::from_raw_fd(raw);

            let mut addr: libc::sockaddr_ll = std::mem::zeroed();
            addr.sll_family = libc::AF_PACKET as u16;
            addr.sll_protocol = ETH_P_ALL.to_be();
            addr.sll_ifindex = ifindex as i32;
            if libc::bind(
                fd.as_raw_fd(),
                &addr as *const libc::sockaddr_ll as *const libc::sockaddr,
                std::mem::size_of::<libc::sockaddr_ll>() as u32,
            ) < 0
            {
                return Err(open_err(io::Error::last_os_error()));
            }

            let mut mreq: libc::packet_mreq = std::mem::zeroed();
            mreq.mr_ifindex = ifindex as i32;
            mreq.mr_type = libc::PACKET_MR_PROMISC as u16;
            if libc::setsockopt(
                fd.as_raw_fd(),
                libc::SOL_PACKET,
                libc::PACKET_ADD_MEMBERSHIP,
                &mreq as *const libc::packet_mreq as *const libc::c_void,
                std::mem::size_of::<libc::packet_mreq>() as u32,
            ) < 0
            {
                return Err(open_err(io::Error::last_os_error()));
            }

            // Wake periodically so a stop request is noticed on a quiet link.
            let tv = libc::timeval { tv_sec: 0, tv_usec: 200_000 };
            if libc::setsockopt(
                fd.as_raw_fd(),
                libc::SOL_SOCKET,
                libc::SO_RCVTIMEO,
                &tv as *const libc::timeval as *const libc::c_void,
                std::mem::size_of::<libc::timeval>() as u32,
            ) < 0
            {
                return Err(open_err(io::Error::last_os_error()));
            }

            Ok(LiveSource { fd, buf: vec![0; SNAPLEN], stop: Arc::new(AtomicBool::new(false)) })
        }
    }

    /// Setting the returned flag makes `next_frame` return end of stream.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }
}

impl FrameSource for LiveSource {
    fn next_frame(&mut self) -> Result<Option<RawFrame>, CaptureError> {
        loop {
            if self.stop.load(Ordering::Relaxed) {
                return Ok(None);
            }
            // SAFETY: buf is a live, writable allocation of buf.len() bytes.
            let n = unsafe {
                libc::recv(
                    self.fd.as_raw_fd(),
                    self.buf.as_mut_ptr() as *mut libc::c_void,
                    self.buf.len(),
                    libc::MSG_TRUNC,
                )
            };
            if n < 0 {
                let err = io::Error::last_os_error();
                match err.kind() {
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted => continue,
                    _ => return Err(CaptureError::Io(err)),
                }
            }
            // MSG_TRUNC reports the full frame length; keep only the snap.
            let len = (n as usize).min(self.buf.len());
            let timestamp_us = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0);
            return Ok(Some(RawFrame { timestamp_us, data: self.buf[..len].to_vec() }));
        }
    }
}
