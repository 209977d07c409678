//! Ethernet frame assembly with valid IPv4/IPv6, TCP and ICMP checksums.

use std::net::IpAddr;

use crate::packet::TcpFlags;

const SRC_MAC: [u8; 6] = [0x02, 0, 0, 0, 0, 0x01];
const DST_MAC: [u8; 6] = [0x02, 0, 0, 0, 0, 0x02];

#[derive(Debug, Clone, Copy)]
pub enum L4<'a> {
    Tcp { src_port: u16, dst_port: u16, flags: TcpFlags, seq: u32, ack: u32 },
    IcmpEcho { reply: bool, ident: u16, seq: u16 },
    Raw { protocol: u8, payload: &'a [u8] },
}

#[derive(Debug, Clone, Copy)]
pub struct FrameBuilder {
    src: IpAddr,
    dst: IpAddr,
    vlan: Option<u16>,
    hop_by_hop: bool,
    ttl: u8,
}

impl FrameBuilder {
    /// Both addresses must be the same family.
    pub fn new(src: IpAddr, dst: IpAddr) -> Self {
        assert_eq!(src.is_ipv4(), dst.is_ipv4(), "mixed address families");
        FrameBuilder { src, dst, vlan: None, hop_by_hop: false, ttl: 64 }
    }

    pub fn with_vlan(mut self, id: u16) -> Self {
        self.vlan = Some(id & 0x0fff);
        self
    }

    /// IPv6 only: prepend an empty hop-by-hop options header.
    pub fn with_ipv6_hop_by_hop(mut self) -> Self {
        self.hop_by_hop = true;
        self
    }

    pub fn with_ttl(mut self, ttl: u8) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn build(&self, l4: L4<'_>) -> Vec<u8> {
        let v6 = self.src.is_ipv6();
        let (protocol, mut body) = match l4 {
            L4::Tcp { src_port, dst_port, flags, seq, ack } => {
                let mut t = Vec::with_capacity(20);
                t.extend_from_slice(&src_port.to_be_bytes());
                t.extend_from_slice(&dst_port.to_be_bytes());
                t.extend_from_slice(&seq.to_be_bytes());
                t.extend_from_slice(&ack.to_be_bytes());
                t.push(5 << 4);
                t.push(flags.bits());
                t.extend_from_slice(&64240u16.to_be_bytes());
                t.extend_from_slice(&[0, 0, 0, 0]);
                (6u8, t)
            }
            L4::IcmpEcho { reply, ident, seq } => {
                let ty = match (v6, reply) {
                    (false, false) => 8,
                    (false, true) => 0,
                    (true, false) => 128,
                    (true, true) => 129,
                };
                let mut t = vec![ty, 0, 0, 0];
                t.extend_from_slice(&ident.to_be_bytes());
                t.extend_from_slice(&seq.to_be_bytes());
                t.extend_from_slice(b"netsonif");
                (if v6 { 58 } else { 1 }, t)
            }
            L4::Raw { protocol, payload } => (protocol, payload.to_vec()),
        };

        let csum_at = match (protocol, &l4) {
            (6, L4::Tcp { .. }) => Some(16),
            (1 | 58, L4::IcmpEcho { .. }) => Some(2),
            _ => None,
        };
        if let Some(at) = csum_at {
            let pseudo = protocol != 1;
            let c = self.l4_checksum(protocol, &body, pseudo);
            body[at..at + 2].copy_from_slice(&c.to_be_bytes());
        }

        let mut f = Vec::with_capacity(14 + 4 + 48 + body.len());
        f.extend_from_slice(&DST_MAC);
        f.extend_from_slice(&SRC_MAC);
        if let Some(id) = self.vlan {
            f.extend_from_slice(&0x8100u16.to_be_bytes());
            f.extend_from_slice(&id.to_be_bytes());
        }
        match (self.src, self.dst) {
            (IpAddr::V4(s), IpAddr::V4(d)) => {
                f.extend_from_slice(&0x0800u16.to_be_bytes());
                let start = f.len();
                f.extend_from_slice(&[0x45, 0]);
                f.extend_from_slice(&((20 + body.len()) as u16).to_be_bytes());
                f.extend_from_slice(&[0, 0, 0x40, 0, self.ttl, protocol, 0, 0]);
                f.extend_from_slice(&s.octets());
                f.extend_from_slice(&d.octets());
                let c = checksum(&[&f[start..start + 20]]);
                f[start + 10..start + 12].copy_from_slice(&c.to_be_bytes());
            }
            (IpAddr::V6(s), IpAddr::V6(d)) => {
                f.extend_from_slice(&0x86ddu16.to_be_bytes());
                let ext = if self.hop_by_hop { 8 } else { 0 };
                f.extend_from_slice(&[0x60, 0, 0, 0]);
                f.extend_from_slice(&((ext + body.len()) as u16).to_be_bytes());
                f.push(if self.hop_by_hop { 0 } else { protocol });
                f.push(self.ttl);
                f.extend_from_slice(&s.octets());
                f.extend_from_slice(&d.octets());
                if self.hop_by_hop {
                    // PadN filling the 6 option bytes.
                    f.extend_from_slice(&[protocol, 0, 1, 4, 0, 0, 0, 0]);
                }
            }
            _ => unreachable!("checked in new"),
        }
        f.extend_from_slice(&body);
        f
    }

    fn l4_checksum(&self, protocol: u8, body: &[u8], pseudo: bool) -> u16 {
        if !pseudo {
            return checksum(&[body]);
        }
        let len = (body.len() as u32).to_be_bytes();
        match (self.src, self.dst) {
            (IpAddr::V4(s), IpAddr::V4(d)) => {
                let p = [0, protocol, len[2], len[3]];
                checksum(&[&s.octets(), &d.octets(), &p, body])
            }
            (IpAddr::V6(s), IpAddr::V6(d)) => {
                let p = [len[0], len[1], len[2], len[3], 0, 0, 0, protocol];
                checksum(&[&s.octets(), &d.octets(), &p, body])
            }
            _ => unreachable!(),
        }
    }
}

/// Internet checksum over the concatenation of `parts`. Every part but the
/// last must have even length.
pub fn checksum(parts: &[&[u8]]) -> u16 {
    let mut sum = 0u32;
    for part in parts {
        let mut chunks = part.chunks_exact(2);
        for c in &mut chunks {
            sum += u32::from(u16::from_be_bytes([c[0], c[1]]));
        }
        if let [b] = chunks.remainder() {
            sum += u32::from(*b) << 8;
        }
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
