//! Time- and host-window features over assembled flows.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::flows::FlowRecord;
use crate::tabular::{NSL_KDD_COLUMNS, NSL_KDD_DROP};

/// Length of the time window, in microseconds.
pub const TIME_WINDOW_US: u64 = 2_000_000;
/// Number of preceding connections in the host window.
pub const HOST_WINDOW: usize = 100;

/// Features computed over connections that started within the preceding
/// two seconds, the current one included.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrafficFeatures {
    pub count: u32,
    pub srv_count: u32,
    pub serror_rate: f64,
    pub srv_serror_rate: f64,
    pub rerror_rate: f64,
    pub srv_rerror_rate: f64,
    pub same_srv_rate: f64,
    pub diff_srv_rate: f64,
    pub srv_diff_host_rate: f64,
}

/// Features over the last 100 connections, the current one included.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HostFeatures {
    pub dst_host_count: u32,
    pub dst_host_srv_count: u32,
    pub dst_host_same_srv_rate: f64,
    pub dst_host_diff_srv_rate: f64,
    pub dst_host_same_src_port_rate: f64,
    pub dst_host_srv_diff_host_rate: f64,
    pub dst_host_serror_rate: f64,
    pub dst_host_srv_serror_rate: f64,
    pub dst_host_rerror_rate: f64,
    pub dst_host_srv_rerror_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub flow: FlowRecord,
    pub traffic: TrafficFeatures,
    pub host: HostFeatures,
}

/// Numeric columns of a feature row: the NSL-KDD columns without the
/// categorical descriptors, label and difficulty.
pub fn feature_names() -> Vec<&'static str> {
    NSL_KDD_COLUMNS
        .iter()
        .copied()
        .filter(|c| *c != "label" && !NSL_KDD_DROP.contains(c))
        .collect()
}

impl FeatureRow {
    /// Values in [`feature_names`] order. Payload-derived content columns
    /// are always zero.
    pub fn values(&self) -> Vec<f64> {
        let f = &self.flow;
        let t = &self.traffic;
        let h = &self.host;
        let mut v = vec![
            f.duration(),
            f.src_bytes as f64,
            f.dst_bytes as f64,
            f64::from(u8::from(f.land)),
            f.wrong_fragment as f64,
            f.urgent as f64,
        ];
        // hot .. is_guest_login
        v.extend([0.0; 13]);
        v.extend([
            t.count as f64,
            t.srv_count as f64,
            t.serror_rate,
            t.srv_serror_rate,
            t.rerror_rate,
            t.srv_rerror_rate,
            t.same_srv_rate,
            t.diff_srv_rate,
            t.srv_diff_host_rate,
            h.dst_host_count as f64,
            h.dst_host_srv_count as f64,
            h.dst_host_same_srv_rate,
            h.dst_host_diff_srv_rate,
            h.dst_host_same_src_port_rate,
            h.dst_host_srv_diff_host_rate,
            h.dst_host_serror_rate,
            h.dst_host_srv_serror_rate,
            h.dst_host_rerror_rate,
            h.dst_host_srv_rerror_rate,
        ]);
        v
    }
}

impl FeatureRow {
    /// The row as a line of an NSL-KDD data file (43 fields, no header),
    /// difficulty 0.
    pub fn kdd_record(&self, label: &str) -> String {
        let v = self.values();
        let fmt = |x: f64| {
            if x.fract() == 0.0 && x.abs() < 1e15 {
                format!("{}", x as i64)
            } else {
                format!("{x}")
            }
        };
        let mut fields: Vec<String> = Vec::with_capacity(43);
        fields.push(fmt(v[0]));
        fields.push(self.flow.protocol().as_str().to_owned());
        fields.push(self.flow.service.clone());
        fields.push(self.flow.flag.as_str().to_owned());
        fields.extend(v[1..].iter().map(|&x| fmt(x)));
        fields.push(label.to_owned());
        fields.push("0".to_owned());
        fields.join(",")
    }
}

/// `num / den` with an empty denominator giving 0.
pub fn rate(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    n: u32,
    serror: u32,
    rerror: u32,
}

/// Multiset counters over the connections currently in a window.
#[derive(Default)]
struct Window<'a> {
    host: HashMap<Ipv4Addr, Tally>,
    srv: HashMap<&'a str, Tally>,
    host_srv: HashMap<(Ipv4Addr, &'a str), u32>,
    host_port: HashMap<(Ipv4Addr, u16), u32>,
}

fn bump<K: Hash + Eq>(m: &mut HashMap<K, Tally>, k: K, f: &FlowRecord, sign: i32) {
    let t = m.entry(k).or_default();
    let d = |x: u32, on: bool| if on { x.wrapping_add_signed(sign) } else { x };
    t.n = d(t.n, true);
    t.serror = d(t.serror, f.flag.is_syn_error());
    t.rerror = d(t.rerror, f.flag.is_rej_error());
}

impl<'a> Window<'a> {
    fn update(&mut self, f: &'a FlowRecord, sign: i32) {
        let h = f.dst_host();
        bump(&mut self.host, h, f, sign);
        bump(&mut self.srv, f.service.as_str(), f, sign);
        let hs = self.host_srv.entry((h, f.service.as_str())).or_default();
        *hs = hs.wrapping_add_signed(sign);
        let hp = self.host_port.entry((h, f.key.orig.port)).or_default();
        *hp = hp.wrapping_add_signed(sign);
    }

    fn host(&self, f: &FlowRecord) -> Tally {
        self.host[&f.dst_host()]
    }

    fn srv(&self, f: &FlowRecord) -> Tally {
        self.srv[f.service.as_str()]
    }

    fn same(&self, f: &FlowRecord) -> u32 {
        self.host_srv[&(f.dst_host(), f.service.as_str())]
    }
}

/// Computes window features for every flow. Flows are ordered by start
/// time (stable for equal starts) and each flow's windows contain the flows
/// at or before its position.
pub fn extract_features(flows: &[FlowRecord]) -> Vec<FeatureRow> {
    let mut sorted: Vec<&FlowRecord> = flows.iter().collect();
    sorted.sort_by_key(|f| f.start_us);

    let mut time = Window::default();
    let mut host = Window::default();
    let mut time_tail = 0usize;
    let mut host_queue: VecDeque<usize> = VecDeque::new();
    let mut out = Vec::with_capacity(sorted.len());

    for (i, &f) in sorted.iter().enumerate() {
        time.update(f, 1);
        while sorted[time_tail].start_us + TIME_WINDOW_US < f.start_us {
            time.update(sorted[time_tail], -1);
            time_tail += 1;
        }
        host.update(f, 1);
        host_queue.push_back(i);
        if host_queue.len() > HOST_WINDOW {
            let old = host_queue.pop_front().expect("nonempty");
            host.update(sorted[old], -1);
        }

        let (c, s, same) = (time.host(f), time.srv(f), time.same(f));
        let traffic = TrafficFeatures {
            count: c.n,
            srv_count: s.n,
            serror_rate: rate(c.serror, c.n),
            srv_serror_rate: rate(s.serror, s.n),
            rerror_rate: rate(c.rerror, c.n),
            srv_rerror_rate: rate(s.rerror, s.n),
            same_srv_rate: rate(same, c.n),
            diff_srv_rate: rate(c.n - same, c.n),
            srv_diff_host_rate: rate(s.n - same, s.n),
        };
        let (c, s, same) = (host.host(f), host.srv(f), host.same(f));
        let same_port = host.host_port[&(f.dst_host(), f.key.orig.port)];
        let hostf = HostFeatures {
            dst_host_count: c.n,
            dst_host_srv_count: s.n,
            dst_host_same_srv_rate: rate(same, c.n),
            dst_host_diff_srv_rate: rate(c.n - same, c.n),
            dst_host_same_src_port_rate: rate(same_port, c.n),
            dst_host_srv_diff_host_rate: rate(s.n - same, s.n),
            dst_host_serror_rate: rate(c.serror, c.n),
            dst_host_srv_serror_rate: rate(s.serror, s.n),
            dst_host_rerror_rate: rate(c.rerror, c.n),
            dst_host_srv_rerror_rate: rate(s.rerror, s.n),
        };
        out.push(FeatureRow {
            flow: f.clone(),
            traffic,
            host: hostf,
        });
    }
    out
}
