//! Packet traces: ordinary client/server sessions and SYN floods.

use std::net::Ipv4Addr;

use rand::Rng as _;

use crate::netflow::{Packet, TcpFlags, Transport};
use crate::rng;

const SYN: u8 = TcpFlags::SYN;
const SYN_ACK: u8 = TcpFlags::SYN | TcpFlags::ACK;
const ACK: u8 = TcpFlags::ACK;
const PSH_ACK: u8 = TcpFlags::PSH | TcpFlags::ACK;
const FIN_ACK: u8 = TcpFlags::FIN | TcpFlags::ACK;

fn tcp(ts: u64, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), flags: u8, payload: u32) -> Packet {
    Packet {
        timestamp_us: ts,
        src: src.0,
        dst: dst.0,
        transport: Transport::Tcp {
            src_port: src.1,
            dst_port: dst.1,
            flags: TcpFlags(flags),
        },
        payload_len: payload,
        fragment: false,
    }
}

/// A complete TCP connection: handshake, `exchanges` request/response
/// pairs, orderly close. Returns the packets and the end time.
pub fn tcp_session(
    rng: &mut rng::Rng,
    start_us: u64,
    client: (Ipv4Addr, u16),
    server: (Ipv4Addr, u16),
    exchanges: usize,
    request: u32,
    response: u32,
) -> (Vec<Packet>, u64) {
    let mut t = start_us;
    let mut v = vec![tcp(t, client, server, SYN, 0)];
    let mut step = |rng: &mut rng::Rng, lo: u64, hi: u64| {
        t += rng.random_range(lo..hi);
        t
    };
    v.push(tcp(step(rng, 200, 3000), server, client, SYN_ACK, 0));
    v.push(tcp(step(rng, 50, 500), client, server, ACK, 0));
    for _ in 0..exchanges {
        let req = request / 2 + rng.random_range(0..=request);
        v.push(tcp(step(rng, 100, 2000), client, server, PSH_ACK, req));
        let mut left = response / 2 + rng.random_range(0..=response);
        while left > 0 {
            let seg = left.min(1460);
            v.push(tcp(step(rng, 100, 5000), server, client, PSH_ACK, seg));
            left -= seg;
        }
        v.push(tcp(step(rng, 50, 500), client, server, ACK, 0));
    }
    v.push(tcp(step(rng, 1000, 50_000), client, server, FIN_ACK, 0));
    v.push(tcp(step(rng, 100, 2000), server, client, FIN_ACK, 0));
    v.push(tcp(step(rng, 50, 500), client, server, ACK, 0));
    let end = v.last().map_or(start_us, |p| p.timestamp_us);
    (v, end)
}

#[derive(Debug, Clone)]
pub struct NormalSpec {
    pub seed: u64,
    pub start_us: u64,
    pub sessions: usize,
    /// Mean gap between session starts.
    pub mean_gap_us: u64,
}

impl Default for NormalSpec {
    fn default() -> Self {
        Self {
            seed: 11,
            start_us: 1_718_000_000_000_000,
            sessions: 400,
            mean_gap_us: 400_000,
        }
    }
}

/// Web, mail, ssh, DNS and ping traffic between 30 clients and a handful
/// of servers.
pub fn normal_traffic(spec: &NormalSpec) -> Vec<Packet> {
    let mut rng = rng::seeded(spec.seed);
    let servers: Vec<Ipv4Addr> = (1..=6).map(|i| Ipv4Addr::new(10, 0, 1, i)).collect();
    let mut t = spec.start_us;
    let mut out = Vec::new();
    for _ in 0..spec.sessions {
        t += rng.random_range(1..=2 * spec.mean_gap_us.max(1));
        let client = Ipv4Addr::new(10, 0, 0, rng.random_range(10..40));
        let cport = rng.random_range(32768..61000);
        let server = servers[rng.random_range(0..servers.len())];
        let kind = rng.random_range(0..100);
        match kind {
            0..=59 => {
                let n = rng.random_range(1..4);
                let (p, _) = tcp_session(&mut rng, t, (client, cport), (server, 80), n, 400, 6000);
                out.extend(p);
            }
            60..=69 => {
                let (p, _) = tcp_session(&mut rng, t, (client, cport), (server, 25), 3, 1200, 80);
                out.extend(p);
            }
            70..=77 => {
                let (p, _) = tcp_session(&mut rng, t, (client, cport), (server, 22), 6, 120, 300);
                out.extend(p);
            }
            78..=94 => {
                let q = rng.random_range(28..60);
                out.push(Packet {
                    timestamp_us: t,
                    src: client,
                    dst: servers[0],
                    transport: Transport::Udp {
                        src_port: cport,
                        dst_port: 53,
                    },
                    payload_len: q,
                    fragment: false,
                });
                out.push(Packet {
                    timestamp_us: t + rng.random_range(300..3000),
                    src: servers[0],
                    dst: client,
                    transport: Transport::Udp {
                        src_port: 53,
                        dst_port: cport,
                    },
                    payload_len: q + rng.random_range(16..200),
                    fragment: false,
                });
            }
            _ => {
                let ping = |ts, src, dst, ty| Packet {
                    timestamp_us: ts,
                    src,
                    dst,
                    transport: Transport::Icmp { icmp_type: ty, code: 0 },
                    payload_len: 56,
                    fragment: false,
                };
                out.push(ping(t, client, server, 8));
                out.push(ping(t + rng.random_range(200..2000), server, client, 0));
            }
        }
    }
    out.sort_by_key(|p| p.timestamp_us);
    out
}

#[derive(Debug, Clone)]
pub struct FloodSpec {
    pub seed: u64,
    pub start_us: u64,
    pub attacker: Ipv4Addr,
    pub victim: Ipv4Addr,
    pub packets: usize,
    /// Mean gap between SYNs.
    pub mean_gap_us: u64,
    /// Sweep destination ports (scan shape) instead of hitting one port.
    pub sweep_ports: bool,
}

impl Default for FloodSpec {
    fn default() -> Self {
        Self {
            seed: 13,
            start_us: 1_718_000_030_000_000,
            attacker: Ipv4Addr::new(203, 0, 113, 66),
            victim: Ipv4Addr::new(10, 0, 1, 2),
            packets: 300,
            mean_gap_us: 5_000,
            sweep_ports: true,
        }
    }
}

/// Unanswered SYNs from one source: every connection ends up `S0`.
pub fn syn_flood(spec: &FloodSpec) -> Vec<Packet> {
    let mut rng = rng::seeded(spec.seed);
    let mut t = spec.start_us;
    (0..spec.packets)
        .map(|i| {
            t += rng.random_range(1..=2 * spec.mean_gap_us.max(1));
            let dport = if spec.sweep_ports { 1 + (i % 1024) as u16 } else { 80 };
            tcp(
                t,
                (spec.attacker, rng.random_range(1024..65000)),
                (spec.victim, dport),
                SYN,
                0,
            )
        })
        .collect()
}

/// Merges traces into one time-ordered capture.
pub fn merge(traces: &[Vec<Packet>]) -> Vec<Packet> {
    let mut v: Vec<Packet> = traces.iter().flatten().cloned().collect();
    v.sort_by_key(|p| p.timestamp_us);
    v
}
