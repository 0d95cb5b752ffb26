//! Classic libpcap files: Ethernet or raw IPv4 frames carrying TCP, UDP
//! or ICMP.

use std::net::Ipv4Addr;
use std::path::Path;

use thiserror::Error;

const MAGIC_MICRO: u32 = 0xA1B2_C3D4;
const MAGIC_NANO: u32 = 0xA1B2_3C4D;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;
pub const LINKTYPE_IPV4: u32 = 228;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;

const IP_MF: u16 = 0x2000;
const IP_OFFSET_MASK: u16 = 0x1FFF;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("bad pcap magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("file too short for a pcap global header ({0} bytes)")]
    ShortHeader(usize),
    #[error("truncated record header at offset {0}")]
    TruncatedRecord(usize),
    #[error("unsupported link type {0}")]
    LinkType(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// TCP flag byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;

    pub fn has(self, bit: u8) -> bool {
        self.0 & bit != 0
    }

    pub fn syn(self) -> bool {
        self.has(Self::SYN)
    }
    pub fn ack(self) -> bool {
        self.has(Self::ACK)
    }
    pub fn fin(self) -> bool {
        self.has(Self::FIN)
    }
    pub fn rst(self) -> bool {
        self.has(Self::RST)
    }
    pub fn urg(self) -> bool {
        self.has(Self::URG)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
            Protocol::Icmp => "icmp",
        }
    }

    fn number(self) -> u8 {
        match self {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
            Protocol::Icmp => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Tcp {
        src_port: u16,
        dst_port: u16,
        flags: TcpFlags,
    },
    Udp {
        src_port: u16,
        dst_port: u16,
    },
    Icmp {
        icmp_type: u8,
        code: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    /// Microseconds since the Unix epoch.
    pub timestamp_us: u64,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub transport: Transport,
    pub payload_len: u32,
    /// More-fragments bit set on the IP header.
    pub fragment: bool,
}

impl Packet {
    pub fn protocol(&self) -> Protocol {
        match self.transport {
            Transport::Tcp { .. } => Protocol::Tcp,
            Transport::Udp { .. } => Protocol::Udp,
            Transport::Icmp { .. } => Protocol::Icmp,
        }
    }

    /// Source and destination ports; zero for ICMP.
    pub fn ports(&self) -> (u16, u16) {
        match self.transport {
            Transport::Tcp { src_port, dst_port, .. } | Transport::Udp { src_port, dst_port } => (src_port, dst_port),
            Transport::Icmp { .. } => (0, 0),
        }
    }

    pub fn tcp_flags(&self) -> Option<TcpFlags> {
        match self.transport {
            Transport::Tcp { flags, .. } => Some(flags),
            _ => None,
        }
    }

    pub fn urgent(&self) -> bool {
        self.tcp_flags().is_some_and(TcpFlags::urg)
    }

    pub fn timestamp_secs(&self) -> f64 {
        self.timestamp_us as f64 / 1e6
    }

    fn transport_header_len(&self) -> usize {
        match self.transport {
            Transport::Tcp { .. } => 20,
            Transport::Udp { .. } | Transport::Icmp { .. } => 8,
        }
    }
}

/// Decoded capture plus counts of what was left out.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Capture {
    pub packets: Vec<Packet>,
    pub link_type: u32,
    pub nanosecond: bool,
    /// Frames that were not IPv4.
    pub skipped_non_ipv4: usize,
    /// IPv4 packets carrying something other than TCP, UDP or ICMP.
    pub skipped_protocol: usize,
    /// Frames that could not be decoded (short headers, later fragments,
    /// a truncated final record).
    pub decode_errors: usize,
}

pub fn read_pcap(path: impl AsRef<Path>) -> Result<Capture, PcapError> {
    parse_pcap(&std::fs::read(path)?)
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(a),
            Endian::Big => u32::from_be_bytes(a),
        }
    }
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

pub fn parse_pcap(bytes: &[u8]) -> Result<Capture, PcapError> {
    if bytes.len() < 4 {
        return Err(PcapError::ShortHeader(bytes.len()));
    }
    let raw = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let (endian, nanosecond) = match raw {
        MAGIC_MICRO => (Endian::Little, false),
        MAGIC_NANO => (Endian::Little, true),
        m if m.swap_bytes() == MAGIC_MICRO => (Endian::Big, false),
        m if m.swap_bytes() == MAGIC_NANO => (Endian::Big, true),
        m => return Err(PcapError::BadMagic(m)),
    };
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(PcapError::ShortHeader(bytes.len()));
    }
    let link_type = endian.u32(&bytes[20..24]);
    if !matches!(link_type, LINKTYPE_ETHERNET | LINKTYPE_RAW | LINKTYPE_IPV4) {
        return Err(PcapError::LinkType(link_type));
    }
    let mut cap = Capture {
        link_type,
        nanosecond,
        ..Capture::default()
    };
    let mut pos = GLOBAL_HEADER_LEN;
    while pos < bytes.len() {
        if bytes.len() - pos < RECORD_HEADER_LEN {
            return Err(PcapError::TruncatedRecord(pos));
        }
        let h = &bytes[pos..pos + RECORD_HEADER_LEN];
        let secs = endian.u32(&h[0..4]) as u64;
        let frac = endian.u32(&h[4..8]) as u64;
        let incl = endian.u32(&h[8..12]) as usize;
        pos += RECORD_HEADER_LEN;
        if bytes.len() - pos < incl {
            // capture cut off mid-record
            cap.decode_errors += 1;
            break;
        }
        let frame = &bytes[pos..pos + incl];
        pos += incl;
        let timestamp_us = secs * 1_000_000 + if nanosecond { frac / 1000 } else { frac };
        match decode_frame(frame, link_type, timestamp_us) {
            Frame::Packet(p) => cap.packets.push(p),
            Frame::NotIpv4 => cap.skipped_non_ipv4 += 1,
            Frame::OtherProtocol => cap.skipped_protocol += 1,
            Frame::Bad => cap.decode_errors += 1,
        }
    }
    Ok(cap)
}

enum Frame {
    Packet(Packet),
    NotIpv4,
    OtherProtocol,
    Bad,
}

fn decode_frame(frame: &[u8], link_type: u32, timestamp_us: u64) -> Frame {
    let ip = if link_type == LINKTYPE_ETHERNET {
        if frame.len() < 14 {
            return Frame::Bad;
        }
        let mut off = 12;
        let mut ethertype = be16(frame, off);
        while ethertype == ETHERTYPE_VLAN {
            off += 4;
            if frame.len() < off + 2 {
                return Frame::Bad;
            }
            ethertype = be16(frame, off);
        }
        if ethertype != ETHERTYPE_IPV4 {
            return Frame::NotIpv4;
        }
        &frame[off + 2..]
    } else {
        frame
    };
    decode_ipv4(ip, timestamp_us)
}

fn decode_ipv4(ip: &[u8], timestamp_us: u64) -> Frame {
    if ip.is_empty() || ip[0] >> 4 != 4 {
        return Frame::NotIpv4;
    }
    let ihl = ((ip[0] & 0x0F) as usize) * 4;
    if ihl < 20 || ip.len() < ihl {
        return Frame::Bad;
    }
    let total_len = be16(ip, 2) as usize;
    let frag = be16(ip, 6);
    if frag & IP_OFFSET_MASK != 0 {
        // later fragments have no transport header
        return Frame::Bad;
    }
    let fragment = frag & IP_MF != 0;
    let proto = ip[9];
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let t = &ip[ihl..];
    let (transport, header_len) = match proto {
        6 => {
            if t.len() < 20 {
                return Frame::Bad;
            }
            let data_off = ((t[12] >> 4) as usize) * 4;
            if data_off < 20 {
                return Frame::Bad;
            }
            (
                Transport::Tcp {
                    src_port: be16(t, 0),
                    dst_port: be16(t, 2),
                    flags: TcpFlags(t[13]),
                },
                data_off,
            )
        }
        17 => {
            if t.len() < 8 {
                return Frame::Bad;
            }
            (
                Transport::Udp {
                    src_port: be16(t, 0),
                    dst_port: be16(t, 2),
                },
                8,
            )
        }
        1 => {
            if t.len() < 8 {
                return Frame::Bad;
            }
            (
                Transport::Icmp {
                    icmp_type: t[0],
                    code: t[1],
                },
                8,
            )
        }
        _ => return Frame::OtherProtocol,
    };
    // Payload length comes from the IP header so snaplen truncation does
    // not change byte counts.
    let Some(payload_len) = total_len.checked_sub(ihl + header_len) else {
        return Frame::Bad;
    };
    Frame::Packet(Packet {
        timestamp_us,
        src,
        dst,
        transport,
        payload_len: payload_len as u32,
        fragment,
    })
}

fn ip_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)]) as u32)
        .sum();
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

/// Ethernet + IPv4 + transport header followed by a zeroed payload.
pub fn encode_frame(p: &Packet) -> Vec<u8> {
    let th = p.transport_header_len();
    let total = 20 + th + p.payload_len as usize;
    let mut f = Vec::with_capacity(14 + total);
    f.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x02]); // dst mac
    f.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]); // src mac
    f.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    let ip_len = u16::try_from(total).unwrap_or(u16::MAX);
    let mut ip = [0u8; 20];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&ip_len.to_be_bytes());
    if p.fragment {
        ip[6..8].copy_from_slice(&IP_MF.to_be_bytes());
    }
    ip[8] = 64;
    ip[9] = p.protocol().number();
    ip[12..16].copy_from_slice(&p.src.octets());
    ip[16..20].copy_from_slice(&p.dst.octets());
    let ck = ip_checksum(&ip);
    ip[10..12].copy_from_slice(&ck.to_be_bytes());
    f.extend_from_slice(&ip);

    match p.transport {
        Transport::Tcp {
            src_port,
            dst_port,
            flags,
        } => {
            let mut t = [0u8; 20];
            t[0..2].copy_from_slice(&src_port.to_be_bytes());
            t[2..4].copy_from_slice(&dst_port.to_be_bytes());
            t[12] = 5 << 4;
            t[13] = flags.0;
            t[14..16].copy_from_slice(&65535u16.to_be_bytes());
            f.extend_from_slice(&t);
        }
        Transport::Udp { src_port, dst_port } => {
            let udp_len = u16::try_from(8 + p.payload_len as usize).unwrap_or(u16::MAX);
            f.extend_from_slice(&src_port.to_be_bytes());
            f.extend_from_slice(&dst_port.to_be_bytes());
            f.extend_from_slice(&udp_len.to_be_bytes());
            f.extend_from_slice(&[0, 0]);
        }
        Transport::Icmp { icmp_type, code } => {
            f.extend_from_slice(&[icmp_type, code, 0, 0, 0, 0, 0, 0]);
        }
    }
    f.resize(14 + total, 0);
    f
}

/// Little-endian, microsecond-resolution pcap with Ethernet framing.
pub fn encode_pcap(packets: &[Packet]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC_MICRO.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes()); // thiszone
    out.extend_from_slice(&0u32.to_le_bytes()); // sigfigs
    out.extend_from_slice(&65535u32.to_le_bytes()); // snaplen
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    for p in packets {
        let frame = encode_frame(p);
        let secs = (p.timestamp_us / 1_000_000) as u32;
        let usec = (p.timestamp_us % 1_000_000) as u32;
        out.extend_from_slice(&secs.to_le_bytes());
        out.extend_from_slice(&usec.to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(&frame);
    }
    out
}

pub fn write_pcap(packets: &[Packet], path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, encode_pcap(packets))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tcp(ts: u64, flags: u8, payload: u32) -> Packet {
        Packet {
            timestamp_us: ts,
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 0, 0, 2),
            transport: Transport::Tcp {
                src_port: 40000,
                dst_port: 80,
                flags: TcpFlags(flags),
            },
            payload_len: payload,
            fragment: false,
        }
    }

    #[test]
    fn round_trip_three_packets() {
        let pkts = vec![
            tcp(1_700_000_000_123_456, TcpFlags::SYN, 0),
            Packet {
                timestamp_us: 1_700_000_001_000_000,
                src: Ipv4Addr::new(192, 168, 1, 5),
                dst: Ipv4Addr::new(8, 8, 8, 8),
                transport: Transport::Udp {
                    src_port: 5353,
                    dst_port: 53,
                },
                payload_len: 40,
                fragment: true,
            },
            Packet {
                timestamp_us: 1_700_000_002_000_001,
                src: Ipv4Addr::new(10, 0, 0, 9),
                dst: Ipv4Addr::new(10, 0, 0, 1),
                transport: Transport::Icmp { icmp_type: 8, code: 0 },
                payload_len: 56,
                fragment: false,
            },
        ];
        let bytes = encode_pcap(&pkts);
        let cap = parse_pcap(&bytes).unwrap();
        assert_eq!(cap.packets, pkts);
        assert_eq!(cap.decode_errors, 0);
    }

    #[test]
    fn header_only_is_empty() {
        let cap = parse_pcap(&encode_pcap(&[])).unwrap();
        assert!(cap.packets.is_empty());
    }

    #[test]
    fn bad_magic_is_named() {
        let mut b = encode_pcap(&[]);
        b[0] = 0xEF;
        let err = parse_pcap(&b).unwrap_err();
        assert!(err.to_string().contains("0xa1b2c3ef"), "{err}");
    }

    #[test]
    fn byte_length_formula() {
        let pkts = vec![tcp(0, TcpFlags::SYN, 0), tcp(1, TcpFlags::ACK, 100)];
        let b = encode_pcap(&pkts);
        let frames: usize = pkts.iter().map(|p| encode_frame(p).len()).sum();
        assert_eq!(b.len(), 24 + 16 * pkts.len() + frames);
        assert_eq!(encode_frame(&pkts[1]).len(), 14 + 20 + 20 + 100);
    }

    #[test]
    fn syn_bit_at_layout_offset() {
        let b = encode_pcap(&[tcp(0, TcpFlags::SYN, 0)]);
        // global header, record header, ethernet, ipv4, tcp byte 13
        let off = 24 + 16 + 14 + 20 + 13;
        assert_eq!(b[off] & 0x02, 0x02);
        assert_eq!(b[off] & !0x02, 0);
    }

    #[test]
    fn ip_checksum_verifies() {
        let f = encode_frame(&tcp(0, TcpFlags::SYN, 7));
        assert_eq!(ip_checksum(&f[14..34]), 0);
    }

    #[test]
    fn big_endian_and_nanosecond_headers() {
        let pkt = tcp(5_000_000_250_000, TcpFlags::SYN, 3);
        let frame = encode_frame(&pkt);
        let mut b = Vec::new();
        b.extend_from_slice(&MAGIC_NANO.to_be_bytes());
        b.extend_from_slice(&2u16.to_be_bytes());
        b.extend_from_slice(&4u16.to_be_bytes());
        b.extend_from_slice(&[0; 8]);
        b.extend_from_slice(&65535u32.to_be_bytes());
        b.extend_from_slice(&1u32.to_be_bytes());
        b.extend_from_slice(&5_000_000u32.to_be_bytes());
        b.extend_from_slice(&250_000_000u32.to_be_bytes());
        b.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        b.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        b.extend_from_slice(&frame);
        let cap = parse_pcap(&b).unwrap();
        assert!(cap.nanosecond);
        assert_eq!(cap.packets, vec![pkt]);
    }

    #[test]
    fn skips_non_ipv4_and_counts() {
        let mut b = encode_pcap(&[tcp(0, TcpFlags::SYN, 0)]);
        let mut arp = vec![0u8; 42];
        arp[12..14].copy_from_slice(&0x0806u16.to_be_bytes());
        b.extend_from_slice(&[0; 8]);
        b.extend_from_slice(&(arp.len() as u32).to_le_bytes());
        b.extend_from_slice(&(arp.len() as u32).to_le_bytes());
        b.extend_from_slice(&arp);
        let cap = parse_pcap(&b).unwrap();
        assert_eq!(cap.packets.len(), 1);
        assert_eq!(cap.skipped_non_ipv4, 1);
    }

    #[test]
    fn truncated_record_header_is_error() {
        let mut b = encode_pcap(&[tcp(0, TcpFlags::SYN, 0)]);
        b.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(parse_pcap(&b), Err(PcapError::TruncatedRecord(_))));
    }

    #[test]
    fn truncated_frame_counts_as_decode_error() {
        let mut b = encode_pcap(&[tcp(0, TcpFlags::SYN, 0), tcp(1, TcpFlags::ACK, 10)]);
        b.truncate(b.len() - 5);
        let cap = parse_pcap(&b).unwrap();
        assert_eq!(cap.packets.len(), 1);
        assert_eq!(cap.decode_errors, 1);
    }
}
