//! Alerts and the sinks they are delivered to.
//!
//! A sink writes each alert exactly once. Sinks are independent: an
//! [`AlertHub`] keeps delivering to the remaining sinks when one fails and
//! reports the failures afterwards.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlertSource {
    Netflow,
    Weblog,
    Malware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub timestamp: DateTime<Utc>,
    pub source: AlertSource,
    pub severity: Severity,
    pub message: String,
    pub evidence: serde_json::Value,
}

impl Alert {
    /// New alert stamped with the current time.
    pub fn new(
        source: AlertSource,
        severity: Severity,
        message: impl Into<String>,
        evidence: serde_json::Value,
    ) -> Self {
        Self {
            timestamp: Utc::now(),
            source,
            severity,
            message: message.into(),
            evidence,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("alert serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("alert sink {sink}: {source}")]
    Io {
        sink: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{} alert sink(s) failed: {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Multiple(Vec<SinkError>),
}

pub trait AlertSink: Send + Sync {
    fn emit(&self, alert: &Alert) -> Result<(), SinkError>;
}

/// Keeps timestamps non-decreasing per sink: an alert older than the last
/// one written is written with the last timestamp.
#[derive(Debug, Default)]
struct Monotone {
    last: Option<DateTime<Utc>>,
}

impl Monotone {
    fn stamp(&mut self, alert: &Alert) -> Alert {
        let mut out = alert.clone();
        if let Some(last) = self.last {
            if out.timestamp < last {
                out.timestamp = last;
            }
        }
        self.last = Some(out.timestamp);
        out
    }
}

/// Append-only newline-delimited JSON file. The file is opened for each
/// alert, so a sink that starts failing recovers once the path is writable
/// again.
#[derive(Debug)]
pub struct JsonlSink {
    path: PathBuf,
    clock: Mutex<Monotone>,
}

impl JsonlSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            clock: Mutex::new(Monotone::default()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Reads every alert back from a sink file.
    pub fn read_all(path: impl AsRef<Path>) -> std::io::Result<Vec<Alert>> {
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Alert::from_json_line(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
            .collect()
    }
}

impl AlertSink for JsonlSink {
    fn emit(&self, alert: &Alert) -> Result<(), SinkError> {
        let mut clock = self.clock.lock().unwrap_or_else(|e| e.into_inner());
        let err = |source| SinkError::Io {
            sink: self.path.display().to_string(),
            source,
        };
        let stamped = clock.stamp(alert);
        let mut line = stamped.to_json_line();
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(err)?;
        f.write_all(line.as_bytes()).map_err(err)
    }
}

/// Writes one JSON line per alert to standard output.
#[derive(Debug, Default)]
pub struct StdoutSink {
    clock: Mutex<Monotone>,
}

impl AlertSink for StdoutSink {
    fn emit(&self, alert: &Alert) -> Result<(), SinkError> {
        let mut clock = self.clock.lock().unwrap_or_else(|e| e.into_inner());
        let line = clock.stamp(alert).to_json_line();
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        writeln!(lock, "{line}").map_err(|source| SinkError::Io {
            sink: "stdout".into(),
            source,
        })
    }
}

/// Collects alerts in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    alerts: Mutex<Vec<Alert>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alerts(&self) -> Vec<Alert> {
        self.alerts.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.alerts.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl AlertSink for MemorySink {
    fn emit(&self, alert: &Alert) -> Result<(), SinkError> {
        let mut v = self.alerts.lock().unwrap_or_else(|e| e.into_inner());
        let mut a = alert.clone();
        if let Some(last) = v.last() {
            if a.timestamp < last.timestamp {
                a.timestamp = last.timestamp;
            }
        }
        v.push(a);
        Ok(())
    }
}

/// A sink that discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl AlertSink for NullSink {
    fn emit(&self, _alert: &Alert) -> Result<(), SinkError> {
        Ok(())
    }
}

/// Fans each alert out to several sinks, serialized behind one lock.
#[derive(Default)]
pub struct AlertHub {
    sinks: Mutex<Vec<Box<dyn AlertSink>>>,
}

impl AlertHub {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, sink: impl AlertSink + 'static) -> Self {
        self.sinks
            .get_mut()
            .unwrap_or_else(|e| e.into_inner())
            .push(Box::new(sink));
        self
    }
}

impl AlertSink for AlertHub {
    fn emit(&self, alert: &Alert) -> Result<(), SinkError> {
        let sinks = self.sinks.lock().unwrap_or_else(|e| e.into_inner());
        let errors: Vec<SinkError> = sinks.iter().filter_map(|s| s.emit(alert).err()).collect();
        match errors.len() {
            0 => Ok(()),
            1 => Err(errors.into_iter().next().expect("one error")),
            _ => Err(SinkError::Multiple(errors)),
        }
    }
}

impl<S: AlertSink + ?Sized> AlertSink for std::sync::Arc<S> {
    fn emit(&self, alert: &Alert) -> Result<(), SinkError> {
        (**self).emit(alert)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::Arc;

    fn sample(i: usize) -> Alert {
        Alert::new(
            AlertSource::Weblog,
            Severity::High,
            format!("alert {i}"),
            json!({ "i": i, "ips": ["10.0.0.1"] }),
        )
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alerts.jsonl");
        let sink = JsonlSink::new(&path);
        let a = sample(1);
        sink.emit(&a).unwrap();
        let back = JsonlSink::read_all(&path).unwrap();
        assert_eq!(back, vec![a]);
    }

    #[test]
    fn thousand_alerts_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alerts.jsonl");
        let sink = JsonlSink::new(&path);
        for i in 0..1000 {
            sink.emit(&sample(i)).unwrap();
        }
        let back = JsonlSink::read_all(&path).unwrap();
        assert_eq!(back.len(), 1000);
        for (i, a) in back.iter().enumerate() {
            assert_eq!(a.message, format!("alert {i}"));
        }
        assert!(back.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn timestamps_forced_monotone() {
        let mem = MemorySink::new();
        let late = sample(0);
        let mut early = sample(1);
        early.timestamp = late.timestamp - chrono::Duration::seconds(5);
        mem.emit(&late).unwrap();
        mem.emit(&early).unwrap();
        let v = mem.alerts();
        assert_eq!(v[1].timestamp, v[0].timestamp);
    }

    #[test]
    fn failing_sink_does_not_block_others() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("gone");
        std::fs::create_dir(&sub).unwrap();
        let mem = Arc::new(MemorySink::new());
        let hub = AlertHub::new()
            .with(JsonlSink::new(sub.join("alerts.jsonl")))
            .with(mem.clone());
        hub.emit(&sample(0)).unwrap();
        std::fs::remove_dir_all(&sub).unwrap();
        assert!(hub.emit(&sample(1)).is_err());
        hub.emit(&sample(2)).unwrap_err();
        assert_eq!(mem.len(), 3);
    }
}
