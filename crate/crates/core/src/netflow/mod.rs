//! Packet captures to connection records to classifier rows.

pub mod features;
pub mod flows;
pub mod pcap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use features::{extract_features, feature_names, FeatureRow, HostFeatures, TrafficFeatures};
pub use flows::{assemble_flows, ConnFlag, Endpoint, FlowKey, FlowRecord, DEFAULT_IDLE_TIMEOUT_S};
pub use pcap::{read_pcap, write_pcap, Capture, Packet, PcapError, Protocol, TcpFlags, Transport};

use crate::forest::{argmax, Forest, ForestError};
use crate::opsd::alert::{Alert, AlertSink, AlertSource, Severity, SinkError};
use crate::tabular::{Standardizer, TabularError};

#[derive(Debug, Error)]
pub enum NetflowError {
    #[error("model expects {expected} features, rows carry {found}")]
    Schema { expected: usize, found: usize },
    #[error("normal class {0:?} is not one of the model classes")]
    NormalClass(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Sink(#[from] SinkError),
    #[error(transparent)]
    Pcap(#[from] PcapError),
}

/// A forest with its input transform and the name of the benign class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficClassifier {
    pub forest: Forest,
    pub standardizer: Standardizer,
    pub feature_names: Vec<String>,
    pub normal_class: String,
}

impl TrafficClassifier {
    pub fn new(
        forest: Forest,
        standardizer: Standardizer,
        feature_names: Vec<String>,
        normal_class: impl Into<String>,
    ) -> Result<Self, NetflowError> {
        let normal_class = normal_class.into();
        if forest.class_index(&normal_class).is_none() {
            return Err(NetflowError::NormalClass(normal_class));
        }
        if standardizer.dim() != forest.n_features() || feature_names.len() != forest.n_features() {
            return Err(NetflowError::Schema {
                expected: forest.n_features(),
                found: standardizer.dim().min(feature_names.len()),
            });
        }
        Ok(Self {
            forest,
            standardizer,
            feature_names,
            normal_class,
        })
    }

    /// Class probabilities for one raw (unstandardized) row.
    pub fn predict_proba(&self, raw: &[f64]) -> Result<Vec<f64>, NetflowError> {
        let z = self.standardizer.apply_row(raw)?;
        Ok(self.forest.predict_proba(&z)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: String,
    pub probability: f64,
    pub is_attack: bool,
}

/// Classifies each row and emits one alert per row whose class is not the
/// normal class. Sink failures are reported after every row was handled.
pub fn classify_stream(
    model: &TrafficClassifier,
    rows: &[FeatureRow],
    sink: &dyn AlertSink,
) -> Result<Vec<Prediction>, NetflowError> {
    let expected = model.forest.n_features();
    let found = feature_names().len();
    if expected != found {
        return Err(NetflowError::Schema { expected, found });
    }
    let mut out = Vec::with_capacity(rows.len());
    let mut sink_errors = Vec::new();
    for row in rows {
        let proba = model.predict_proba(&row.values())?;
        let k = argmax(&proba);
        let class = model.forest.classes()[k].clone();
        let is_attack = class != model.normal_class;
        if is_attack {
            let f = &row.flow;
            let alert = Alert::new(
                AlertSource::Netflow,
                Severity::High,
                format!("{class} traffic {}", f.key),
                json!({
                    "class": class,
                    "probability": proba[k],
                    "flow": {
                        "protocol": f.key.protocol.as_str(),
                        "src": f.key.orig.to_string(),
                        "dst": f.key.resp.to_string(),
                        "service": f.service,
                        "flag": f.flag.as_str(),
                        "start_us": f.start_us,
                    },
                    "count": row.traffic.count,
                    "serror_rate": row.traffic.serror_rate,
                }),
            );
            if let Err(e) = sink.emit(&alert) {
                log::error!("{e}");
                sink_errors.push(e);
            }
        }
        out.push(Prediction {
            class,
            probability: proba[k],
            is_attack,
        });
    }
    match sink_errors.len() {
        0 => Ok(out),
        1 => Err(sink_errors.pop().expect("one").into()),
        _ => Err(SinkError::Multiple(sink_errors).into()),
    }
}

/// Reads a capture and produces its feature rows.
pub fn rows_from_pcap(path: impl AsRef<std::path::Path>) -> Result<(Capture, Vec<FeatureRow>), NetflowError> {
    let cap = read_pcap(path)?;
    let flows = assemble_flows(&cap.packets, DEFAULT_IDLE_TIMEOUT_S);
    let rows = extract_features(&flows);
    Ok((cap, rows))
}
