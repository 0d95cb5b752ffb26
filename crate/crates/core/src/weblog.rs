//! Access-log parsing, per-request window features and the isolation
//! forest intrusion detector built on them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::LazyLock;

use chrono::{DateTime, FixedOffset};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::isoforest::{fit_iforest, Decision, IsoError, IsoParams, IsolationModel};
use crate::matrix::Matrix;
use crate::opsd::alert::{Alert, AlertSink, AlertSource, Severity, SinkError};
use crate::tabular::{Standardizer, TabularError};

pub const DEFAULT_WINDOW_SECONDS: u64 = 60;
pub const DEFAULT_ALERT_THRESHOLD: usize = 10;
/// Idle gap that ends a per-IP session.
pub const SESSION_GAP_SECONDS: i64 = 30 * 60;
pub const N_FEATURES: usize = 7;
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "ip_frequency",
    "unique_connections_count",
    "ip_volume",
    "url_aberrations",
    "unusual_referrer",
    "user_agent_rarity",
    "out_of_order_access",
];
const TOP_IPS: usize = 5;

#[derive(Debug, Error)]
pub enum WeblogError {
    #[error("malformed log line: {0}")]
    Malformed(String),
    #[error("training log has no usable records")]
    EmptyTraining,
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error(transparent)]
    Iso(#[from] IsoError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Sink(#[from] SinkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub client_ip: String,
    pub timestamp: DateTime<FixedOffset>,
    pub method: String,
    pub path: String,
    pub protocol: String,
    pub status: u16,
    pub bytes: u64,
    pub referrer: String,
    pub user_agent: String,
}

static LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"^(\S+) \S+ \S+ \[([^\]]+)\] "([^"]*)" (\d{3}) (\d+|-)(?: "((?:[^"\\]|\\.)*)" "((?:[^"\\]|\\.)*)")?\s*$"#,
    )
    .expect("valid regex")
});

/// Parses one Combined Log Format line. The referrer and user-agent fields
/// may be absent (Common Log Format), in which case they are empty.
pub fn parse_log_line(line: &str) -> Result<LogRecord, WeblogError> {
    let bad = || WeblogError::Malformed(line.chars().take(120).collect());
    let caps = LINE.captures(line.trim_end_matches(['\r', '\n'])).ok_or_else(bad)?;
    let timestamp = DateTime::parse_from_str(&caps[2], "%d/%b/%Y:%H:%M:%S %z").map_err(|_| bad())?;
    let mut req = caps[3].split_whitespace();
    let (Some(method), Some(path), Some(protocol), None) = (req.next(), req.next(), req.next(), req.next()) else {
        return Err(bad());
    };
    let status: u16 = caps[4].parse().map_err(|_| bad())?;
    if !(100..=599).contains(&status) {
        return Err(bad());
    }
    let bytes = match &caps[5] {
        "-" => 0,
        b => b.parse().map_err(|_| bad())?,
    };
    let field = |i: usize| {
        caps.get(i)
            .map(|m| m.as_str())
            .filter(|s| *s != "-")
            .unwrap_or("")
            .to_owned()
    };
    Ok(LogRecord {
        client_ip: caps[1].to_owned(),
        timestamp,
        method: method.to_owned(),
        path: path.to_owned(),
        protocol: protocol.to_owned(),
        status,
        bytes,
        referrer: field(6),
        user_agent: field(7),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<LogRecord>,
    /// Non-blank lines that did not parse.
    pub malformed: usize,
}

pub fn parse_log(text: &str) -> ParsedLog {
    let mut out = ParsedLog::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match parse_log_line(line) {
            Ok(r) => out.records.push(r),
            Err(_) => out.malformed += 1,
        }
    }
    out
}

pub fn read_log(path: impl AsRef<Path>) -> Result<ParsedLog, WeblogError> {
    let bytes = std::fs::read(path)?;
    Ok(parse_log(&String::from_utf8_lossy(&bytes)))
}

/// Renders a record back into Combined Log Format.
pub fn format_log_line(r: &LogRecord) -> String {
    let dash = |s: &str| if s.is_empty() { "-".to_owned() } else { s.to_owned() };
    format!(
        "{} - - [{}] \"{} {} {}\" {} {} \"{}\" \"{}\"",
        r.client_ip,
        r.timestamp.format("%d/%b/%Y:%H:%M:%S %z"),
        r.method,
        r.path,
        r.protocol,
        r.status,
        r.bytes,
        dash(&r.referrer),
        dash(&r.user_agent),
    )
}

const LITERAL_PATTERNS: [&str; 3] = ["../", "/./", "//"];
const ENCODED_PATTERNS: [&str; 2] = ["%2e%2e%2f", "%2e/"];

fn count_non_overlapping(hay: &str, needle: &str) -> u32 {
    hay.matches(needle).count() as u32
}

/// Occurrences of traversal-style substrings in a request target. Literal
/// patterns are case-sensitive, percent-encoded ones are not. Each pattern
/// is counted separately and non-overlapping.
pub fn url_aberrations(path: &str) -> u32 {
    let lower = path.to_ascii_lowercase();
    LITERAL_PATTERNS
        .iter()
        .map(|p| count_non_overlapping(path, p))
        .chain(ENCODED_PATTERNS.iter().map(|p| count_non_overlapping(&lower, p)))
        .sum()
}

/// Lower-cased host part of a referrer URL.
pub fn referrer_host(referrer: &str) -> Option<String> {
    let r = referrer.trim();
    if r.is_empty() || r == "-" {
        return None;
    }
    let rest = r.split_once("://").map_or(r, |(_, rest)| rest);
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    let host = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    let host = host.split(':').next().unwrap_or("");
    (!host.is_empty()).then(|| host.to_ascii_lowercase())
}

/// Splits records (in order) into per-IP sessions and yields each
/// consecutive path pair inside a session, tagged with the index of the
/// later record.
fn transitions(records: &[&LogRecord]) -> Vec<(usize, (String, String))> {
    let mut last: HashMap<&str, (DateTime<FixedOffset>, &str)> = HashMap::new();
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if let Some((t, prev)) = last.get(r.client_ip.as_str()) {
            if (r.timestamp - *t).num_seconds() <= SESSION_GAP_SECONDS {
                out.push((i, ((*prev).to_owned(), r.path.clone())));
            }
        }
        last.insert(&r.client_ip, (r.timestamp, &r.path));
    }
    out
}

fn time_sorted(records: &[LogRecord]) -> Vec<&LogRecord> {
    let mut v: Vec<&LogRecord> = records.iter().collect();
    v.sort_by_key(|r| r.timestamp);
    v
}

/// What normal traffic looked like during training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub known_hosts: BTreeSet<String>,
    pub ua_freq: BTreeMap<String, u64>,
    pub transitions: BTreeSet<(String, String)>,
}

impl Baseline {
    pub fn build(records: &[LogRecord]) -> Self {
        let sorted = time_sorted(records);
        let mut b = Baseline::default();
        for r in &sorted {
            if let Some(h) = referrer_host(&r.referrer) {
                b.known_hosts.insert(h);
            }
            *b.ua_freq.entry(r.user_agent.clone()).or_default() += 1;
        }
        b.transitions = transitions(&sorted).into_iter().map(|(_, t)| t).collect();
        b
    }

    pub fn max_ua_freq(&self) -> u64 {
        self.ua_freq.values().copied().max().unwrap_or(0)
    }

    /// `1 - freq / max_freq`; 1 for user agents never seen.
    pub fn ua_rarity(&self, ua: &str) -> f64 {
        let max = self.max_ua_freq();
        match self.ua_freq.get(ua) {
            Some(&f) if max > 0 => 1.0 - f as f64 / max as f64,
            _ => 1.0,
        }
    }

    pub fn unusual_referrer(&self, referrer: &str) -> bool {
        referrer_host(referrer).is_some_and(|h| !self.known_hosts.contains(&h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LogFeatureRow {
    pub ip_frequency: u32,
    pub unique_connections_count: u32,
    pub ip_volume: u64,
    pub url_aberrations: u32,
    pub unusual_referrer: u32,
    pub user_agent_rarity: f64,
    pub out_of_order_access: u32,
}

impl LogFeatureRow {
    pub fn values(&self) -> [f64; N_FEATURES] {
        [
            self.ip_frequency as f64,
            self.unique_connections_count as f64,
            self.ip_volume as f64,
            self.url_aberrations as f64,
            self.unusual_referrer as f64,
            self.user_agent_rarity,
            self.out_of_order_access as f64,
        ]
    }
}

#[derive(Default)]
struct IpAgg<'a> {
    requests: u32,
    paths: BTreeSet<&'a str>,
    volume: u64,
    unseen_transitions: u32,
}

/// One row per record, in the order given. Per-IP aggregates cover the
/// whole window, so every record from an IP shares them.
pub fn extract_log_features(window: &[LogRecord], baseline: &Baseline) -> Vec<LogFeatureRow> {
    let mut agg: HashMap<&str, IpAgg> = HashMap::new();
    for r in window {
        let a = agg.entry(&r.client_ip).or_default();
        a.requests += 1;
        a.paths.insert(&r.path);
        a.volume += r.bytes;
    }
    let sorted = time_sorted(window);
    for (i, t) in transitions(&sorted) {
        if !baseline.transitions.contains(&t) {
            agg.get_mut(sorted[i].client_ip.as_str())
                .expect("ip aggregated")
                .unseen_transitions += 1;
        }
    }
    window
        .iter()
        .map(|r| {
            let a = &agg[r.client_ip.as_str()];
            LogFeatureRow {
                ip_frequency: a.requests,
                unique_connections_count: a.paths.len() as u32,
                ip_volume: a.volume,
                url_aberrations: url_aberrations(&r.path),
                unusual_referrer: u32::from(baseline.unusual_referrer(&r.referrer)),
                user_agent_rarity: baseline.ua_rarity(&r.user_agent),
                out_of_order_access: a.unseen_transitions,
            }
        })
        .collect()
}

/// Tumbling window `[start, end)` in Unix seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWindow {
    pub start: i64,
    pub end: i64,
    pub records: Vec<LogRecord>,
}

/// Groups records into windows aligned to multiples of `window_seconds`
/// since the epoch. Windows without records are omitted.
pub fn windows(records: &[LogRecord], window_seconds: u64) -> Vec<LogWindow> {
    let w = window_seconds.max(1) as i64;
    let mut by: BTreeMap<i64, Vec<LogRecord>> = BTreeMap::new();
    for r in time_sorted(records) {
        let start = r.timestamp.timestamp().div_euclid(w) * w;
        by.entry(start).or_default().push(r.clone());
    }
    by.into_iter()
        .map(|(start, records)| LogWindow {
            start,
            end: start + w,
            records,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidsParams {
    pub iso: IsoParams,
    pub window_seconds: u64,
    /// Alert when a window has more than this many anomalous requests.
    pub alert_threshold: usize,
}

impl Default for WidsParams {
    fn default() -> Self {
        Self {
            iso: IsoParams::default(),
            window_seconds: DEFAULT_WINDOW_SECONDS,
            alert_threshold: DEFAULT_ALERT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidsModel {
    pub standardizer: Standardizer,
    pub model: IsolationModel,
    pub baseline: Baseline,
    pub window_seconds: u64,
    pub alert_threshold: usize,
}

/// Feature matrix for training. Each window is featurized against a
/// baseline built from the windows of the other parity, so the novelty
/// features (referrer, user agent, transitions) take realistic values on
/// training rows instead of being identically "seen".
pub fn training_matrix(records: &[LogRecord], window_seconds: u64) -> Matrix {
    let wins = windows(records, window_seconds);
    let half = |parity: usize| -> Vec<LogRecord> {
        wins.iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == parity)
            .flat_map(|(_, w)| w.records.iter().cloned())
            .collect()
    };
    let baselines = [Baseline::build(&half(1)), Baseline::build(&half(0))];
    let mut x = Matrix::zeros(0, N_FEATURES);
    for (i, w) in wins.iter().enumerate() {
        for row in extract_log_features(&w.records, &baselines[i % 2]) {
            x.push_row(&row.values()).expect("fixed width");
        }
    }
    x
}

pub fn train_wids(records: &[LogRecord], params: &WidsParams) -> Result<WidsModel, WeblogError> {
    if params.window_seconds == 0 {
        return Err(WeblogError::Params("window_seconds must be > 0".into()));
    }
    if params.alert_threshold == 0 {
        return Err(WeblogError::Params("alert threshold K must be >= 1".into()));
    }
    if records.is_empty() {
        return Err(WeblogError::EmptyTraining);
    }
    let x = training_matrix(records, params.window_seconds);
    let standardizer = Standardizer::fit(&x)?;
    let z = standardizer.apply(&x)?;
    let model = fit_iforest(&z, &params.iso)?;
    Ok(WidsModel {
        standardizer,
        model,
        baseline: Baseline::build(records),
        window_seconds: params.window_seconds,
        alert_threshold: params.alert_threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowScore {
    pub anomaly_count: usize,
    pub decisions: Vec<Decision>,
    pub scores: Vec<f64>,
    pub alert: Option<Alert>,
}

impl WidsModel {
    /// Per-record anomaly scores and decisions for one window.
    pub fn decide(&self, records: &[LogRecord]) -> Result<(Vec<f64>, Vec<Decision>), WeblogError> {
        let rows = extract_log_features(records, &self.baseline);
        let mut scores = Vec::with_capacity(rows.len());
        let mut decisions = Vec::with_capacity(rows.len());
        for row in rows {
            let z = self.standardizer.apply_row(&row.values())?;
            let s = self.model.score(&z)?;
            scores.push(s);
            decisions.push(self.model.decide_score(s));
        }
        Ok((scores, decisions))
    }
}

/// Scores one window and emits a single alert when more than K of its
/// requests are anomalous.
pub fn score_window(m: &WidsModel, window: &LogWindow, sink: &dyn AlertSink) -> Result<WindowScore, WeblogError> {
    let (scores, decisions) = m.decide(&window.records)?;
    let anomalous: Vec<&LogRecord> = window
        .records
        .iter()
        .zip(&decisions)
        .filter(|(_, d)| **d == Decision::Anomaly)
        .map(|(r, _)| r)
        .collect();
    let anomaly_count = anomalous.len();
    let mut alert = None;
    if anomaly_count > m.alert_threshold {
        let mut per_ip: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &anomalous {
            *per_ip.entry(&r.client_ip).or_default() += 1;
        }
        let mut top: Vec<(&str, usize)> = per_ip.into_iter().collect();
        top.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        top.truncate(TOP_IPS);
        let a = Alert::new(
            AlertSource::Weblog,
            Severity::High,
            format!(
                "{anomaly_count} anomalous requests in window (threshold {})",
                m.alert_threshold
            ),
            json!({
                "anomaly_count": anomaly_count,
                "threshold": m.alert_threshold,
                "window_start": window.start,
                "window_end": window.end,
                "top_ips": top.iter().map(|(ip, n)| json!({"ip": ip, "count": n})).collect::<Vec<_>>(),
            }),
        );
        sink.emit(&a)?;
        alert = Some(a);
    }
    Ok(WindowScore {
        anomaly_count,
        decisions,
        scores,
        alert,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opsd::alert::MemorySink;

    const CANON: &str =
        r#"1.2.3.4 - - [10/Oct/2024:13:55:36 +0000] "GET /index.html HTTP/1.1" 200 2326 "-" "Mozilla/5.0""#;

    #[test]
    fn parses_canonical_line() {
        let r = parse_log_line(CANON).unwrap();
        assert_eq!(r.client_ip, "1.2.3.4");
        assert_eq!(r.status, 200);
        assert_eq!(r.bytes, 2326);
        assert_eq!(r.method, "GET");
        assert_eq!(r.path, "/index.html");
        assert_eq!(r.referrer, "");
        assert_eq!(r.user_agent, "Mozilla/5.0");
        assert_eq!(r.timestamp.timestamp(), 1_728_568_536);
        assert_eq!(parse_log_line(&format_log_line(&r)).unwrap(), r);
    }

    #[test]
    fn dash_bytes_and_malformed() {
        let line = CANON.replace("2326", "-");
        assert_eq!(parse_log_line(&line).unwrap().bytes, 0);
        let parsed = parse_log(&format!(
            "{CANON}\n1.2.3.4 - - [10/Oct/2024:13:55:36 +0000] 200 12\n\n{}\n",
            CANON.replace(" 200 ", " 999 ")
        ));
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.malformed, 2);
    }

    #[test]
    fn aberrations() {
        assert_eq!(url_aberrations("/a/../../etc/passwd"), 2);
        assert_eq!(url_aberrations("/index.html"), 0);
        assert_eq!(url_aberrations("/%2E%2E%2Fetc"), 1);
        assert_eq!(url_aberrations("/%2e%2e%2fetc"), 1);
        assert_eq!(url_aberrations("/a/./b"), 1);
        assert_eq!(url_aberrations("/x%2E/y"), 1);
    }

    #[test]
    fn referrer_hosts() {
        assert_eq!(
            referrer_host("https://Example.com:8443/x?y").as_deref(),
            Some("example.com")
        );
        assert_eq!(referrer_host("-"), None);
        assert_eq!(referrer_host(""), None);
        assert_eq!(referrer_host("http://user@h.org/").as_deref(), Some("h.org"));
    }

    fn rec(ip: &str, sec: i64, path: &str, ua: &str, referrer: &str) -> LogRecord {
        LogRecord {
            client_ip: ip.into(),
            timestamp: DateTime::from_timestamp(1_700_000_000 + sec, 0).unwrap().fixed_offset(),
            method: "GET".into(),
            path: path.into(),
            protocol: "HTTP/1.1".into(),
            status: 200,
            bytes: 100,
            referrer: referrer.into(),
            user_agent: ua.into(),
        }
    }

    #[test]
    fn ua_rarity_endpoints() {
        let b = Baseline::build(&[
            rec("a", 0, "/", "common", ""),
            rec("a", 1, "/", "common", ""),
            rec("b", 2, "/", "rare", ""),
        ]);
        assert_eq!(b.ua_rarity("common"), 0.0);
        assert_eq!(b.ua_rarity("rare"), 0.5);
        assert_eq!(b.ua_rarity("never"), 1.0);
    }

    #[test]
    fn window_features() {
        let base = Baseline::build(&[rec("x", 0, "/", "ua", "http://known.com/"), rec("x", 1, "/a", "ua", "")]);
        let w = [
            rec("1", 0, "/", "ua", "http://known.com/p"),
            rec("1", 1, "/a", "ua", "http://evil.net/"),
            rec("1", 2, "/b", "ua", ""),
            rec("2", 3, "/a", "other", ""),
        ];
        let rows = extract_log_features(&w, &base);
        assert_eq!(rows[0].ip_frequency, 3);
        assert_eq!(rows[0].unique_connections_count, 3);
        assert_eq!(rows[0].ip_volume, 300);
        assert_eq!(rows[0].unusual_referrer, 0);
        assert_eq!(rows[1].unusual_referrer, 1);
        // "/"->"/a" known, "/a"->"/b" not
        assert_eq!(rows[2].out_of_order_access, 1);
        assert_eq!(rows[3].out_of_order_access, 0);
        assert_eq!(rows[3].user_agent_rarity, 1.0);
    }

    #[test]
    fn session_gap_breaks_transitions() {
        let r = [
            rec("1", 0, "/a", "", ""),
            rec("1", SESSION_GAP_SECONDS + 1, "/b", "", ""),
        ];
        let rows = extract_log_features(&r, &Baseline::default());
        assert_eq!(rows[0].out_of_order_access, 0);
    }

    #[test]
    fn windows_are_aligned() {
        let w = windows(
            &[
                rec("1", 59, "/", "", ""),
                rec("1", 61, "/", "", ""),
                rec("1", 0, "/", "", ""),
            ],
            60,
        );
        // 1_700_000_000 is 20 s past a minute boundary
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|w| w.start % 60 == 0 && w.end - w.start == 60));
        assert_eq!(w[0].records.len() + w[1].records.len(), 3);
    }

    #[test]
    fn empty_window_scores_zero() {
        let train: Vec<LogRecord> = (0..200)
            .map(|i| rec(&format!("10.0.0.{}", i % 7), i, &format!("/p{}", i % 5), "ua", ""))
            .collect();
        let params = WidsParams {
            iso: IsoParams {
                num_trees: 20,
                num_samples: 64,
                ..IsoParams::default()
            },
            ..WidsParams::default()
        };
        let m = train_wids(&train, &params).unwrap();
        let sink = MemorySink::new();
        let empty = LogWindow {
            start: 0,
            end: 60,
            records: vec![],
        };
        let s = score_window(&m, &empty, &sink).unwrap();
        assert_eq!(s.anomaly_count, 0);
        assert!(s.alert.is_none());
        assert!(sink.is_empty());
        assert!(matches!(train_wids(&[], &params), Err(WeblogError::EmptyTraining)));
    }
}
