//! Ethernet → IPv4/IPv6 → TCP / ICMP echo header decoding.
//!
//! Only header fields are read; payload bytes are never inspected.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use crate::packet::{HomeNetworks, PacketSummary, TcpFlags};

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_IPV6: u16 = 0x86DD;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88A8;

const IPPROTO_HOPOPTS: u8 = 0;
const IPPROTO_ICMP: u8 = 1;
const IPPROTO_TCP: u8 = 6;
const IPPROTO_ROUTING: u8 = 43;
const IPPROTO_FRAGMENT: u8 = 44;
const IPPROTO_AH: u8 = 51;
const IPPROTO_ICMPV6: u8 = 58;
const IPPROTO_DSTOPTS: u8 = 60;

const ETH_HEADER_LEN: usize = 14;
const TCP_MIN_HEADER: usize = 20;
const ICMP_HEADER_LEN: usize = 8;

/// Outcome of decoding one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Packet(PacketSummary),
    /// Well-formed but not TCP or ICMP echo.
    Skipped,
    /// Truncated or internally inconsistent header.
    Malformed,
}

struct Network<'a> {
    src: IpAddr,
    dst: IpAddr,
    protocol: u8,
    payload: &'a [u8],
}

enum Step<'a> {
    Ok(Network<'a>),
    Skip,
    Malformed,
}

/// Decodes an Ethernet II frame captured at `timestamp_us`.
pub fn decode_ethernet(frame: &[u8], timestamp_us: u64, home: &HomeNetworks) -> Decoded {
    if frame.len() < ETH_HEADER_LEN {
        return Decoded::Malformed;
    }
    let mut offset = 12;
    let mut ethertype = be16(frame, offset);
    // Up to two stacked VLAN tags.
    for _ in 0..2 {
        if ethertype != ETHERTYPE_VLAN && ethertype != ETHERTYPE_QINQ {
            break;
        }
        offset += 4;
        if frame.len() < offset + 2 {
            return Decoded::Malformed;
        }
        ethertype = be16(frame, offset);
    }
    let l3 = &frame[offset + 2..];
    match ethertype {
        ETHERTYPE_IPV4 => decode_ip(parse_ipv4(l3), timestamp_us, home),
        ETHERTYPE_IPV6 => decode_ip(parse_ipv6(l3), timestamp_us, home),
        _ => Decoded::Skipped,
    }
}

fn decode_ip(step: Step<'_>, timestamp_us: u64, home: &HomeNetworks) -> Decoded {
    let net = match step {
        Step::Ok(net) => net,
        Step::Skip => return Decoded::Skipped,
        Step::Malformed => return Decoded::Malformed,
    };
    match net.protocol {
        IPPROTO_TCP => {
            let tcp = net.payload;
            if tcp.len() < TCP_MIN_HEADER {
                return Decoded::Malformed;
            }
            let data_offset = usize::from(tcp[12] >> 4) * 4;
            if data_offset < TCP_MIN_HEADER || data_offset > tcp.len() {
                return Decoded::Malformed;
            }
            let flags = TcpFlags::from_bits(tcp[13]);
            Decoded::Packet(PacketSummary::tcp(
                timestamp_us,
                (net.src, be16(tcp, 0)),
                (net.dst, be16(tcp, 2)),
                flags,
                home,
            ))
        }
        IPPROTO_ICMP | IPPROTO_ICMPV6 => {
            if net.payload.len() < ICMP_HEADER_LEN {
                return Decoded::Malformed;
            }
            let echo = match net.protocol {
                IPPROTO_ICMP => matches!(net.payload[0], 0 | 8),
                _ => matches!(net.payload[0], 128 | 129),
            };
            if echo {
                Decoded::Packet(PacketSummary::icmp_echo(timestamp_us, net.src, net.dst, home))
            } else {
                Decoded::Skipped
            }
        }
        _ => Decoded::Skipped,
    }
}

fn parse_ipv4(buf: &[u8]) -> Step<'_> {
    if buf.len() < 20 {
        return Step::Malformed;
    }
    if buf[0] >> 4 != 4 {
        return Step::Malformed;
    }
    let ihl = usize::from(buf[0] & 0x0f) * 4;
    let total_len = usize::from(be16(buf, 2));
    if ihl < 20 || total_len < ihl || buf.len() < ihl {
        return Step::Malformed;
    }
    // Frames may carry Ethernet padding past total_len, and snaplen may cut
    // the datagram short; both are fine as long as the transport header is
    // present.
    let end = total_len.min(buf.len());
    let fragment_offset = be16(buf, 6) & 0x1fff;
    if fragment_offset != 0 {
        // Non-first fragments carry no transport header.
        return Step::Skip;
    }
    let src = Ipv4Addr::new(buf[12], buf[13], buf[14], buf[15]);
    let dst = Ipv4Addr::new(buf[16], buf[17], buf[18], buf[19]);
    Step::Ok(Network { src: IpAddr::V4(src), dst: IpAddr::V4(dst), protocol: buf[9], payload: &buf[ihl..end] })
}

fn parse_ipv6(buf: &[u8]) -> Step<'_> {
    if buf.len() < 40 {
        return Step::Malformed;
    }
    if buf[0] >> 4 != 6 {
        return Step::Malformed;
    }
    let payload_len = usize::from(be16(buf, 4));
    let mut next = buf[6];
    let src = Ipv6Addr::from(<[u8; 16]>::try_from(&buf[8..24]).expect("16 bytes"));
    let dst = Ipv6Addr::from(<[u8; 16]>::try_from(&buf[24..40]).expect("16 bytes"));
    let end = (40 + payload_len).min(buf.len());
    let mut offset = 40;

    loop {
        match next {
            IPPROTO_HOPOPTS | IPPROTO_ROUTING | IPPROTO_DSTOPTS => {
                if end < offset + 2 {
                    return Step::Malformed;
                }
                let len = (usize::from(buf[offset + 1]) + 1) * 8;
                if end < offset + len {
                    return Step::Malformed;
                }
                next = buf[offset];
                offset += len;
            }
            IPPROTO_FRAGMENT => {
                if end < offset + 8 {
                    return Step::Malformed;
                }
                let frag_offset = be16(buf, offset + 2) >> 3;
                if frag_offset != 0 {
                    return Step::Skip;
                }
                next = buf[offset];
                offset += 8;
            }
            IPPROTO_AH => {
                if end < offset + 2 {
                    return Step::Malformed;
                }
                let len = (usize::from(buf[offset + 1]) + 2) * 4;
                if end < offset + len {
                    return Step::Malformed;
                }
                next = buf[offset];
                offset += len;
            }
            // TCP, ICMPv6, or any terminal header (ESP, no-next-header, UDP...).
            _ => break,
        }
    }

    Step::Ok(Network { src: IpAddr::V6(src), dst: IpAddr::V6(dst), protocol: next, payload: &buf[offset..end] })
}

#[inline]
fn be16(buf: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([buf[at], buf[at + 1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::Protocol;
    use crate::trafficgen::frame::{FrameBuilder, L4};

    fn home() -> HomeNetworks {
        HomeNetworks::parse(&["10.0.0.0/24", "fd00::/64"]).unwrap()
    }

    fn v4(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    #[test]
    fn syn_frame_from_raw_bytes() {
        // Hand-assembled Ethernet II / IPv4 / TCP with only SYN set.
        let mut frame = vec![0u8; 14 + 20 + 20];
        frame[12] = 0x08;
        frame[13] = 0x00;
        let ip = &mut frame[14..34];
        ip[0] = 0x45;
        ip[2..4].copy_from_slice(&40u16.to_be_bytes());
        ip[8] = 64;
        ip[9] = 6;
        ip[12..16].copy_from_slice(&[203, 0, 113, 5]);
        ip[16..20].copy_from_slice(&[10, 0, 0, 7]);
        let tcp = &mut frame[34..54];
        tcp[0..2].copy_from_slice(&40000u16.to_be_bytes());
        tcp[2..4].copy_from_slice(&80u16.to_be_bytes());
        tcp[12] = 0x50;
        tcp[13] = 0x02;

        match decode_ethernet(&frame, 7, &home()) {
            Decoded::Packet(p) => {
                assert_eq!(p.protocol(), Protocol::Tcp);
                assert_eq!(p.flags(), TcpFlags::SYN);
                assert_eq!(p.src_port(), Some(40000));
                assert_eq!(p.dst_port(), Some(80));
                assert_eq!(p.timestamp_us(), 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn arp_and_udp_are_skipped() {
        let mut arp = vec![0u8; 42];
        arp[12] = 0x08;
        arp[13] = 0x06;
        assert_eq!(decode_ethernet(&arp, 0, &home()), Decoded::Skipped);

        let udp = FrameBuilder::new(v4("10.0.0.1"), v4("10.0.0.2")).build(L4::Raw { protocol: 17, payload: &[0u8; 8] });
        assert_eq!(decode_ethernet(&udp, 0, &home()), Decoded::Skipped);
    }

    #[test]
    fn truncated_headers_are_malformed() {
        let frame = FrameBuilder::new(v4("203.0.113.5"), v4("10.0.0.7")).build(L4::Tcp {
            src_port: 1,
            dst_port: 2,
            flags: TcpFlags::SYN,
            seq: 0,
            ack: 0,
        });
        for cut in [0, 10, 14, 20, 33, 40, 53] {
            assert_eq!(decode_ethernet(&frame[..cut], 0, &home()), Decoded::Malformed, "cut at {cut}");
        }
        assert!(matches!(decode_ethernet(&frame, 0, &home()), Decoded::Packet(_)));
    }

    #[test]
    fn icmp_admits_only_echo() {
        let b = FrameBuilder::new(v4("203.0.113.5"), v4("10.0.0.7"));
        let req = b.build(L4::IcmpEcho { reply: false, ident: 1, seq: 1 });
        let p = match decode_ethernet(&req, 0, &home()) {
            Decoded::Packet(p) => p,
            other => panic!("{other:?}"),
        };
        assert_eq!(p.protocol(), Protocol::IcmpEcho);
        assert!(p.flags().is_empty());
        assert_eq!(p.src_port(), None);

        // Destination unreachable (type 3).
        let unreach = b.build(L4::Raw { protocol: 1, payload: &[3, 1, 0, 0, 0, 0, 0, 0] });
        assert_eq!(decode_ethernet(&unreach, 0, &home()), Decoded::Skipped);
    }

    #[test]
    fn ipv6_with_extension_headers() {
        let src: IpAddr = "2001:db8::5".parse().unwrap();
        let dst: IpAddr = "fd00::7".parse().unwrap();
        let frame = FrameBuilder::new(src, dst).with_ipv6_hop_by_hop().build(L4::Tcp {
            src_port: 5555,
            dst_port: 443,
            flags: TcpFlags::FIN | TcpFlags::ACK,
            seq: 1,
            ack: 1,
        });
        match decode_ethernet(&frame, 0, &home()) {
            Decoded::Packet(p) => {
                assert_eq!(p.src_ip(), src);
                assert_eq!(p.dst_port(), Some(443));
                assert_eq!(p.flags(), TcpFlags::FIN | TcpFlags::ACK);
                assert_eq!(p.direction(), crate::packet::Direction::Incoming);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vlan_tag_is_walked() {
        let frame = FrameBuilder::new(v4("10.0.0.1"), v4("8.8.8.8")).with_vlan(42).build(L4::Tcp {
            src_port: 1,
            dst_port: 2,
            flags: TcpFlags::RST,
            seq: 0,
            ack: 0,
        });
        match decode_ethernet(&frame, 0, &home()) {
            Decoded::Packet(p) => assert_eq!(p.flags(), TcpFlags::RST),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_flag_combination_round_trips() {
        let b = FrameBuilder::new(v4("203.0.113.5"), v4("10.0.0.7"));
        for bits in 0u8..64 {
            let flags = TcpFlags::from_bits(bits);
            let frame = b.build(L4::Tcp { src_port: 9, dst_port: 10, flags, seq: 0, ack: 0 });
            match decode_ethernet(&frame, 0, &home()) {
                Decoded::Packet(p) => assert_eq!(p.flags(), flags, "bits {bits:#04x}"),
                other => panic!("bits {bits:#04x}: {other:?}"),
            }
        }
    }
}
