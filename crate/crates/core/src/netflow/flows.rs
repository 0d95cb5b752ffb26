//! Grouping packets into connections.

use std::collections::HashMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::pcap::{Packet, Protocol, Transport};

pub const DEFAULT_IDLE_TIMEOUT_S: f64 = 120.0;

/// Connection state summary, a reduced form of the KDD flag set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConnFlag {
    SF,
    S0,
    S1,
    REJ,
    RSTO,
    OTH,
}

impl ConnFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ConnFlag::SF => "SF",
            ConnFlag::S0 => "S0",
            ConnFlag::S1 => "S1",
            ConnFlag::REJ => "REJ",
            ConnFlag::RSTO => "RSTO",
            ConnFlag::OTH => "OTH",
        }
    }

    /// Counted by the serror rates.
    pub fn is_syn_error(self) -> bool {
        matches!(self, ConnFlag::S0 | ConnFlag::REJ)
    }

    /// Counted by the rerror rates.
    pub fn is_rej_error(self) -> bool {
        self == ConnFlag::REJ
    }
}

impl fmt::Display for ConnFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub addr: Ipv4Addr,
    pub port: u16,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.addr, self.port)
    }
}

/// Oriented 5-tuple: `orig` opened the connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub orig: Endpoint,
    pub resp: Endpoint,
    pub protocol: Protocol,
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} -> {}", self.protocol.as_str(), self.orig, self.resp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub start_us: u64,
    pub end_us: u64,
    pub service: String,
    pub flag: ConnFlag,
    /// Payload bytes sent by the originator.
    pub src_bytes: u64,
    /// Payload bytes sent by the responder.
    pub dst_bytes: u64,
    pub land: bool,
    pub wrong_fragment: u32,
    pub urgent: u32,
    pub packets: u32,
}

impl FlowRecord {
    pub fn duration(&self) -> f64 {
        (self.end_us - self.start_us) as f64 / 1e6
    }

    pub fn protocol(&self) -> Protocol {
        self.key.protocol
    }

    pub fn dst_host(&self) -> Ipv4Addr {
        self.key.resp.addr
    }
}

/// Service name for a responder port (or ICMP type).
pub fn service_name(protocol: Protocol, resp_port: u16, icmp_type: Option<u8>) -> &'static str {
    match protocol {
        Protocol::Icmp => match icmp_type {
            Some(8) => "eco_i",
            Some(0) => "ecr_i",
            Some(3) => "urp_i",
            Some(13 | 14) => "tim_i",
            _ => "oth_i",
        },
        Protocol::Tcp => match resp_port {
            20 => "ftp_data",
            21 => "ftp",
            22 => "ssh",
            23 => "telnet",
            25 => "smtp",
            53 => "domain",
            79 => "finger",
            80 | 8080 => "http",
            110 => "pop_3",
            111 => "sunrpc",
            113 => "auth",
            119 => "nntp",
            143 => "imap4",
            179 => "bgp",
            389 => "ldap",
            443 => "http_443",
            445 => "microsoft_ds",
            513 => "login",
            514 => "shell",
            6000..=6063 => "X11",
            _ => "private",
        },
        Protocol::Udp => match resp_port {
            53 => "domain_u",
            69 => "tftp_u",
            123 => "ntp_u",
            _ => "private",
        },
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Side {
    any: bool,
    pure_syn: bool,
    syn_ack: bool,
    fin: bool,
    rst: bool,
    bytes: u64,
}

#[derive(Debug)]
struct FlowState {
    seq: usize,
    /// Endpoint that sent the first packet; side 0.
    first: Endpoint,
    other: Endpoint,
    protocol: Protocol,
    start_us: u64,
    last_us: u64,
    sides: [Side; 2],
    /// Side that sent the first pure SYN.
    syn_side: Option<usize>,
    icmp_type: Option<u8>,
    wrong_fragment: u32,
    urgent: u32,
    packets: u32,
    /// FIN seen from both sides or RST seen.
    closed: bool,
}

impl FlowState {
    fn new(seq: usize, p: &Packet, src: Endpoint, dst: Endpoint) -> Self {
        Self {
            seq,
            first: src,
            other: dst,
            protocol: p.protocol(),
            start_us: p.timestamp_us,
            last_us: p.timestamp_us,
            sides: [Side::default(); 2],
            syn_side: None,
            icmp_type: match p.transport {
                Transport::Icmp { icmp_type, .. } => Some(icmp_type),
                _ => None,
            },
            wrong_fragment: 0,
            urgent: 0,
            packets: 0,
            closed: false,
        }
    }

    fn add(&mut self, p: &Packet, side: usize) {
        self.last_us = self.last_us.max(p.timestamp_us);
        self.packets += 1;
        if p.fragment {
            self.wrong_fragment += 1;
        }
        if p.urgent() {
            self.urgent += 1;
        }
        let s = &mut self.sides[side];
        s.any = true;
        s.bytes += p.payload_len as u64;
        if let Some(f) = p.tcp_flags() {
            if f.syn() && !f.ack() {
                s.pure_syn = true;
                if self.syn_side.is_none() {
                    self.syn_side = Some(side);
                }
            }
            if f.syn() && f.ack() {
                s.syn_ack = true;
            }
            s.fin |= f.fin();
            s.rst |= f.rst();
        }
        if self.sides[0].fin && self.sides[1].fin || self.sides[0].rst || self.sides[1].rst {
            self.closed = true;
        }
    }

    fn finish(self) -> (usize, FlowRecord) {
        let o = self.syn_side.unwrap_or(0);
        let r = 1 - o;
        let (orig, resp) = if o == 0 {
            (self.first, self.other)
        } else {
            (self.other, self.first)
        };
        let (so, sr) = (self.sides[o], self.sides[r]);
        let flag = if self.protocol != Protocol::Tcp {
            ConnFlag::SF
        } else {
            let syn = so.pure_syn;
            let established = syn && sr.syn_ack;
            if syn && !sr.any {
                ConnFlag::S0
            } else if syn && !sr.syn_ack && sr.rst {
                ConnFlag::REJ
            } else if established && so.rst {
                ConnFlag::RSTO
            } else if established && so.fin && sr.fin {
                ConnFlag::SF
            } else if established && !sr.rst {
                ConnFlag::S1
            } else {
                ConnFlag::OTH
            }
        };
        let record = FlowRecord {
            key: FlowKey {
                orig,
                resp,
                protocol: self.protocol,
            },
            start_us: self.start_us,
            end_us: self.last_us,
            service: service_name(self.protocol, resp.port, self.icmp_type).to_owned(),
            flag,
            src_bytes: so.bytes,
            dst_bytes: sr.bytes,
            land: orig == resp,
            wrong_fragment: self.wrong_fragment,
            urgent: self.urgent,
            packets: self.packets,
        };
        (self.seq, record)
    }
}

type NormKey = (Endpoint, Endpoint, Protocol);

fn endpoints(p: &Packet) -> (Endpoint, Endpoint) {
    let (sp, dp) = p.ports();
    (Endpoint { addr: p.src, port: sp }, Endpoint { addr: p.dst, port: dp })
}

/// Assembles packets into flows, returned in order of first packet.
///
/// A flow ends when both sides have sent FIN, either side sent RST, or it
/// has been idle for longer than `idle_timeout_s`. Packets arriving after
/// the close without a SYN (the last ACK of a teardown, say) still belong
/// to the closed flow; a SYN starts a new one.
pub fn assemble_flows(packets: &[Packet], idle_timeout_s: f64) -> Vec<FlowRecord> {
    let mut order: Vec<usize> = (0..packets.len()).collect();
    order.sort_by_key(|&i| packets[i].timestamp_us);
    let idle_us = (idle_timeout_s.max(0.0) * 1e6) as u64;

    let mut active: HashMap<NormKey, FlowState> = HashMap::new();
    let mut done: Vec<(usize, FlowRecord)> = Vec::new();
    let mut seq = 0usize;
    for i in order {
        let p = &packets[i];
        let (src, dst) = endpoints(p);
        let key = if src <= dst {
            (src, dst, p.protocol())
        } else {
            (dst, src, p.protocol())
        };
        let starts_new = p.tcp_flags().is_some_and(|f| f.syn() && !f.ack());
        if let Some(st) = active.get(&key) {
            let idle = p.timestamp_us.saturating_sub(st.last_us) > idle_us;
            if idle || (st.closed && starts_new) {
                let st = active.remove(&key).expect("present");
                done.push(st.finish());
            }
        }
        let st = active.entry(key).or_insert_with(|| {
            seq += 1;
            FlowState::new(seq - 1, p, src, dst)
        });
        let side = usize::from(src != st.first);
        st.add(p, side);
    }
    done.extend(active.into_values().map(FlowState::finish));
    done.sort_by_key(|(seq, _)| *seq);
    done.into_iter().map(|(_, r)| r).collect()
}

#[cfg(test)]
mod tests {
    use super::super::pcap::TcpFlags;
    use super::*;

    const A: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 1);
    const B: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);

    fn tcp(ts: u64, from_a: bool, flags: u8, payload: u32) -> Packet {
        let (src, dst, sp, dp) = if from_a { (A, B, 40000, 80) } else { (B, A, 80, 40000) };
        Packet {
            timestamp_us: ts,
            src,
            dst,
            transport: Transport::Tcp {
                src_port: sp,
                dst_port: dp,
                flags: TcpFlags(flags),
            },
            payload_len: payload,
            fragment: false,
        }
    }

    const S: u8 = TcpFlags::SYN;
    const SA: u8 = TcpFlags::SYN | TcpFlags::ACK;
    const AK: u8 = TcpFlags::ACK;
    const F: u8 = TcpFlags::FIN | TcpFlags::ACK;
    const R: u8 = TcpFlags::RST;

    #[test]
    fn full_handshake_and_teardown_is_sf() {
        let pkts = vec![
            tcp(1_000_000, true, S, 0),
            tcp(1_000_100, false, SA, 0),
            tcp(1_000_200, true, AK, 0),
            tcp(1_100_000, true, AK | TcpFlags::PSH, 300),
            tcp(1_200_000, false, AK | TcpFlags::PSH, 1200),
            tcp(1_300_000, true, F, 0),
            tcp(1_300_100, false, F, 0),
            tcp(1_500_000, true, AK, 0),
        ];
        let flows = assemble_flows(&pkts, DEFAULT_IDLE_TIMEOUT_S);
        assert_eq!(flows.len(), 1);
        let f = &flows[0];
        assert_eq!(f.flag, ConnFlag::SF);
        assert_eq!(f.duration(), 0.5);
        assert_eq!((f.src_bytes, f.dst_bytes), (300, 1200));
        assert_eq!(f.key.orig.addr, A);
        assert_eq!(f.service, "http");
        assert_eq!(f.packets, 8);
    }

    #[test]
    fn lone_syn_is_s0() {
        let flows = assemble_flows(&[tcp(0, true, S, 0)], 120.0);
        assert_eq!(flows[0].flag, ConnFlag::S0);
        assert_eq!(flows[0].src_bytes, 0);
        assert_eq!(flows[0].duration(), 0.0);
    }

    #[test]
    fn syn_then_rst_is_rej() {
        let flows = assemble_flows(&[tcp(0, true, S, 0), tcp(10, false, R | AK, 0)], 120.0);
        assert_eq!(flows[0].flag, ConnFlag::REJ);
    }

    #[test]
    fn established_then_reset_by_originator_is_rsto() {
        let pkts = [
            tcp(0, true, S, 0),
            tcp(1, false, SA, 0),
            tcp(2, true, AK, 0),
            tcp(3, true, R, 0),
        ];
        assert_eq!(assemble_flows(&pkts, 120.0)[0].flag, ConnFlag::RSTO);
    }

    #[test]
    fn established_without_close_is_s1() {
        let pkts = [tcp(0, true, S, 0), tcp(1, false, SA, 0), tcp(2, true, AK, 10)];
        assert_eq!(assemble_flows(&pkts, 120.0)[0].flag, ConnFlag::S1);
    }

    #[test]
    fn midstream_is_oth_and_responder_syn_sets_direction() {
        let pkts = [tcp(0, true, AK, 10), tcp(1, false, AK, 10)];
        assert_eq!(assemble_flows(&pkts, 120.0)[0].flag, ConnFlag::OTH);

        // first packet from B, but A sends the SYN: A is the originator
        let pkts = [tcp(0, false, AK, 5), tcp(1, true, S, 0)];
        let f = &assemble_flows(&pkts, 120.0)[0];
        assert_eq!(f.key.orig.addr, A);
        assert_eq!((f.src_bytes, f.dst_bytes), (0, 5));
    }

    #[test]
    fn idle_timeout_splits() {
        let pkts = [tcp(0, true, AK, 1), tcp(121_000_000, true, AK, 2)];
        assert_eq!(assemble_flows(&pkts, 120.0).len(), 2);
        assert_eq!(assemble_flows(&pkts, 200.0).len(), 1);
    }

    #[test]
    fn new_syn_after_close_starts_new_flow() {
        let pkts = [tcp(0, true, S, 0), tcp(1, false, R | AK, 0), tcp(2, true, S, 0)];
        let flows = assemble_flows(&pkts, 120.0);
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[0].flag, ConnFlag::REJ);
        assert_eq!(flows[1].flag, ConnFlag::S0);
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let pkts = [tcp(5, false, SA, 0), tcp(0, true, S, 0)];
        let f = &assemble_flows(&pkts, 120.0)[0];
        assert_eq!(f.start_us, 0);
        assert_eq!(f.key.orig.addr, A);
    }

    #[test]
    fn udp_and_icmp_are_sf() {
        let udp = Packet {
            timestamp_us: 0,
            src: A,
            dst: B,
            transport: Transport::Udp {
                src_port: 5000,
                dst_port: 53,
            },
            payload_len: 30,
            fragment: false,
        };
        let icmp = Packet {
            transport: Transport::Icmp { icmp_type: 8, code: 0 },
            ..udp.clone()
        };
        let flows = assemble_flows(&[udp, icmp], 120.0);
        assert_eq!(flows.len(), 2);
        assert!(flows.iter().all(|f| f.flag == ConnFlag::SF));
        assert_eq!(flows[0].service, "domain_u");
        assert_eq!(flows[1].service, "eco_i");
    }

    #[test]
    fn land_when_endpoints_equal() {
        let mut p = tcp(0, true, S, 0);
        p.dst = p.src;
        p.transport = Transport::Tcp {
            src_port: 139,
            dst_port: 139,
            flags: TcpFlags(S),
        };
        assert!(assemble_flows(&[p], 120.0)[0].land);
    }
}
