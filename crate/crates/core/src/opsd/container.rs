//! Model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   4  magic "AIDR"
//! 4   2  format version (1)
//! 6   1  model kind: 1 forest, 2 isoforest, 3 seqnet, 4 wids_bundle, 5 malware_bundle
//! 7   1  reserved, 0
//! 8   4  metadata length M
//! 12  M  metadata, UTF-8 JSON
//! .   8  payload length P
//! .   P  payload
//! .   8  FNV-1a 64 of the payload
//! ```
//!
//! Payload values are fixed-width: `u32` counts and indices, `u64` seeds and
//! sizes, `f64` as IEEE-754 bits. Arrays and strings carry a `u32` length
//! prefix; an optional value is a `u8` flag followed by the value when the
//! flag is 1. Composite models are the concatenation of their parts in the
//! order the encoders below write them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::forest::{Forest, ForestParams, Node, Tree};
use crate::isoforest::{IsoNode, IsoParams, IsoTree, IsolationModel};
use crate::malwarelab::{CascadeConfig, FeatureSet, MalwareBundle};
use crate::netflow::TrafficClassifier;
use crate::rng::fnv1a64;
use crate::seqnet::{Dims, SequenceClassifier, SequenceModel, Tokenizer};
use crate::tabular::Standardizer;
use crate::weblog::{Baseline, WidsModel};

pub const MAGIC: &[u8; 4] = b"AIDR";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic {0:02x?}, not a model file")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0} (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("unknown model kind {0}")]
    UnknownKind(u8),
    #[error("expected a {expected} model, file holds {found}")]
    WrongKind { expected: ModelKind, found: ModelKind },
    #[error("checksum failure: {0}")]
    Checksum(String),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Forest,
    Isoforest,
    Seqnet,
    WidsBundle,
    MalwareBundle,
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Forest => 1,
            ModelKind::Isoforest => 2,
            ModelKind::Seqnet => 3,
            ModelKind::WidsBundle => 4,
            ModelKind::MalwareBundle => 5,
        }
    }

    pub fn from_code(c: u8) -> Result<Self, ContainerError> {
        Ok(match c {
            1 => ModelKind::Forest,
            2 => ModelKind::Isoforest,
            3 => ModelKind::Seqnet,
            4 => ModelKind::WidsBundle,
            5 => ModelKind::MalwareBundle,
            c => return Err(ContainerError::UnknownKind(c)),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Isoforest => "isoforest",
            ModelKind::Seqnet => "seqnet",
            ModelKind::WidsBundle => "wids_bundle",
            ModelKind::MalwareBundle => "malware_bundle",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Traffic classifier: forest, standardizer, feature names.
    Forest(TrafficClassifier),
    Isoforest(IsolationModel),
    Seqnet(SequenceClassifier),
    Wids(WidsModel),
    Malware(MalwareBundle),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Forest(_) => ModelKind::Forest,
            Model::Isoforest(_) => ModelKind::Isoforest,
            Model::Seqnet(_) => ModelKind::Seqnet,
            Model::Wids(_) => ModelKind::WidsBundle,
            Model::Malware(_) => ModelKind::MalwareBundle,
        }
    }
}

/// Descriptive header. Informational only: decoding relies on the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: ModelKind,
    pub producer: String,
    /// FNV-1a 64 over the newline-joined input feature names.
    pub schema_hash: String,
    pub classes: Vec<String>,
    pub feature_names: Vec<String>,
    pub params: serde_json::Value,
}

pub fn schema_hash<S: AsRef<str>>(names: &[S]) -> String {
    let joined: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
    format!("{:016x}", fnv1a64(joined.join("\n").as_bytes()))
}

fn metadata(m: &Model) -> Metadata {
    let (classes, feature_names, params): (Vec<String>, Vec<String>, serde_json::Value) = match m {
        Model::Forest(c) => (
            c.forest.classes().to_vec(),
            c.feature_names.clone(),
            json!({ "forest": c.forest.params(), "normal_class": c.normal_class }),
        ),
        Model::Isoforest(iso) => (
            vec![],
            (0..iso.n_features()).map(|i| format!("x{i}")).collect(),
            json!({ "isoforest": iso.params() }),
        ),
        Model::Seqnet(s) => (
            vec![],
            vec![],
            json!({ "dims": s.model.dims(), "max_words": s.tokenizer.max_words() }),
        ),
        Model::Wids(w) => (
            vec![],
            crate::weblog::FEATURE_NAMES.iter().map(|s| (*s).to_owned()).collect(),
            json!({
                "isoforest": w.model.params(),
                "window_seconds": w.window_seconds,
                "alert_threshold": w.alert_threshold,
            }),
        ),
        Model::Malware(b) => (
            b.forest.classes().to_vec(),
            vec![],
            json!({
                "forest": b.forest.params(),
                "cascade": b.cfg,
                "dims": b.classifier.model.dims(),
            }),
        ),
    };
    Metadata {
        kind: m.kind(),
        producer: format!("aidr-core {}", env!("CARGO_PKG_VERSION")),
        schema_hash: schema_hash(&feature_names),
        classes,
        feature_names,
        params,
    }
}

// ---------------------------------------------------------------- writer

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("value fits in u32");
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn strs<S: AsRef<str>>(&mut self, v: &[S]) {
        self.u32(v.len());
        v.iter().for_each(|s| self.str(s.as_ref()));
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn opt_u64(&mut self, v: Option<u64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.u64(x);
            }
            None => self.u8(0),
        }
    }

    fn forest(&mut self, f: &Forest) {
        let p = f.params();
        self.u32(p.n_estimators);
        self.u32(p.min_samples_split);
        self.opt_u64(p.max_samples.map(|v| v as u64));
        self.u64(p.seed);
        self.opt_u64(p.features_per_split.map(|v| v as u64));
        self.u32(f.n_features());
        self.strs(f.classes());
        self.u32(f.trees().len());
        for t in f.trees() {
            self.u32(t.nodes().len());
            for n in t.nodes() {
                match n {
                    Node::Internal {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        self.u8(0);
                        self.u32(*feature);
                        self.f64(*threshold);
                        self.u32(*left);
                        self.u32(*right);
                    }
                    Node::Leaf { counts } => {
                        self.u8(1);
                        self.u32(counts.len());
                        counts.iter().for_each(|&c| self.u32(c as usize));
                    }
                }
            }
        }
    }

    fn standardizer(&mut self, s: &Standardizer) {
        self.f64s(&s.mean);
        self.f64s(&s.std);
    }

    fn iso(&mut self, m: &IsolationModel) {
        let p = m.params();
        self.u32(p.num_trees);
        self.u64(p.num_samples as u64);
        self.f64(p.contamination);
        self.u64(p.seed);
        self.u64(m.psi() as u64);
        self.f64(m.threshold());
        self.u32(m.n_features());
        self.u32(m.trees().len());
        for t in m.trees() {
            self.u32(t.height_limit());
            self.u32(t.nodes().len());
            for n in t.nodes() {
                match n {
                    IsoNode::Internal {
                        feature,
                        split,
                        left,
                        right,
                    } => {
                        self.u8(0);
                        self.u32(*feature);
                        self.f64(*split);
                        self.u32(*left);
                        self.u32(*right);
                    }
                    IsoNode::External { size } => {
                        self.u8(1);
                        self.u64(*size as u64);
                    }
                }
            }
        }
    }

    fn seq(&mut self, s: &SequenceClassifier) {
        self.u32(s.tokenizer.max_words());
        self.strs(s.tokenizer.words());
        let d = s.model.dims();
        self.u32(d.vocab_rows);
        self.u32(d.embed_dim);
        self.u32(d.hidden);
        self.u32(d.max_len);
        self.f64s(s.model.params());
    }

    fn baseline(&mut self, b: &Baseline) {
        let hosts: Vec<&String> = b.known_hosts.iter().collect();
        self.strs(&hosts);
        self.u32(b.ua_freq.len());
        for (ua, n) in &b.ua_freq {
            self.str(ua);
            self.u64(*n);
        }
        self.u32(b.transitions.len());
        for (a, c) in &b.transitions {
            self.str(a);
            self.str(c);
        }
    }

    fn cascade(&mut self, c: &CascadeConfig) {
        self.f64(c.hi);
        self.f64(c.lo);
        self.u32(c.hash_dim);
        self.u32(c.min_len);
        self.u32(c.max_len);
        self.u8(match c.feature_set {
            FeatureSet::Strings => 0,
            FeatureSet::Full => 1,
        });
    }
}

fn payload(m: &Model) -> Vec<u8> {
    let mut w = Writer::default();
    match m {
        Model::Forest(c) => {
            w.forest(&c.forest);
            w.standardizer(&c.standardizer);
            w.strs(&c.feature_names);
            w.str(&c.normal_class);
        }
        Model::Isoforest(iso) => w.iso(iso),
        Model::Seqnet(s) => w.seq(s),
        Model::Wids(wm) => {
            w.standardizer(&wm.standardizer);
            w.iso(&wm.model);
            w.baseline(&wm.baseline);
            w.u64(wm.window_seconds);
            w.u64(wm.alert_threshold as u64);
        }
        Model::Malware(b) => {
            w.forest(&b.forest);
            w.seq(&b.classifier);
            w.cascade(&b.cfg);
        }
    }
    w.buf
}

pub fn encode_model(m: &Model) -> Vec<u8> {
    let meta = serde_json::to_vec(&metadata(m)).expect("metadata serializes");
    let body = payload(m);
    let mut out = Vec::with_capacity(32 + meta.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(m.kind().code());
    out.push(0);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&fnv1a64(&body).to_le_bytes());
    out
}

/// Writes the model to `path` via a temporary file in the same directory.
pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<(), ContainerError> {
    let path = path.as_ref();
    let bytes = encode_model(m);
    let tmp = path.with_extension("aidr.tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------- reader

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

type R<T> = Result<T, ContainerError>;

fn malformed(msg: impl Into<String>) -> ContainerError {
    ContainerError::Malformed(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> R<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed(format!("payload ends early at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> R<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> R<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> R<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> R<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    /// A length prefix, sanity-checked against the remaining bytes.
    fn len(&mut self, min_item: usize) -> R<usize> {
        let n = self.u32()?;
        if n.saturating_mul(min_item.max(1)) > self.buf.len() - self.pos {
            return Err(malformed(format!("length {n} exceeds payload")));
        }
        Ok(n)
    }
    fn str(&mut self) -> R<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| malformed("string is not UTF-8"))
    }
    fn strs(&mut self) -> R<Vec<String>> {
        let n = self.len(4)?;
        (0..n).map(|_| self.str()).collect()
    }
    fn f64s(&mut self) -> R<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn opt_u64(&mut self) -> R<Option<u64>> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.u64()?)),
            f => Err(malformed(format!("option flag {f}"))),
        }
    }

    fn forest(&mut self) -> R<Forest> {
        let params = ForestParams {
            n_estimators: self.u32()?,
            min_samples_split: self.u32()?,
            max_samples: self.opt_u64()?.map(|v| v as usize),
            seed: self.u64()?,
            features_per_split: self.opt_u64()?.map(|v| v as usize),
        };
        let n_features = self.u32()?;
        let classes = self.strs()?;
        let n_trees = self.len(5)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = self.len(5)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                nodes.push(match self.u8()? {
                    0 => Node::Internal {
                        feature: self.u32()?,
                        threshold: self.f64()?,
                        left: self.u32()?,
                        right: self.u32()?,
                    },
                    1 => {
                        let k = self.len(4)?;
                        Node::Leaf {
                            counts: (0..k).map(|_| self.u32().map(|c| c as u32)).collect::<R<_>>()?,
                        }
                    }
                    t => return Err(malformed(format!("tree node tag {t}"))),
                });
            }
            trees.push(Tree::from_nodes(nodes, classes.len()).map_err(|e| malformed(e.to_string()))?);
        }
        Forest::from_parts(trees, classes, n_features, params).map_err(|e| malformed(e.to_string()))
    }

    fn standardizer(&mut self) -> R<Standardizer> {
        let mean = self.f64s()?;
        let std = self.f64s()?;
        if mean.len() != std.len() {
            return Err(malformed("standardizer mean/std lengths differ"));
        }
        Ok(Standardizer { mean, std })
    }

    fn iso(&mut self) -> R<IsolationModel> {
        let params = IsoParams {
            num_trees: self.u32()?,
            num_samples: self.u64()? as usize,
            contamination: self.f64()?,
            seed: self.u64()?,
        };
        let psi = self.u64()? as usize;
        let threshold = self.f64()?;
        let n_features = self.u32()?;
        let n_trees = self.len(9)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let limit = self.u32()?;
            let n_nodes = self.len(9)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                nodes.push(match self.u8()? {
                    0 => IsoNode::Internal {
                        feature: self.u32()?,
                        split: self.f64()?,
                        left: self.u32()?,
                        right: self.u32()?,
                    },
                    1 => IsoNode::External {
                        size: self.u64()? as usize,
                    },
                    t => return Err(malformed(format!("isolation node tag {t}"))),
                });
            }
            trees.push(IsoTree::from_nodes(nodes, limit).map_err(|e| malformed(e.to_string()))?);
        }
        IsolationModel::from_parts(trees, psi, threshold, n_features, params).map_err(|e| malformed(e.to_string()))
    }

    fn seq(&mut self) -> R<SequenceClassifier> {
        let max_words = self.u32()?;
        let words = self.strs()?;
        let tokenizer = Tokenizer::from_words(words, max_words).map_err(|e| malformed(e.to_string()))?;
        let dims = Dims {
            vocab_rows: self.u32()?,
            embed_dim: self.u32()?,
            hidden: self.u32()?,
            max_len: self.u32()?,
        };
        let params = self.f64s()?;
        let model = SequenceModel::from_params(dims, params).map_err(|e| malformed(e.to_string()))?;
        SequenceClassifier::new(tokenizer, model).map_err(|e| malformed(e.to_string()))
    }

    fn baseline(&mut self) -> R<Baseline> {
        let known_hosts: BTreeSet<String> = self.strs()?.into_iter().collect();
        let n = self.len(12)?;
        let mut ua_freq = BTreeMap::new();
        for _ in 0..n {
            let ua = self.str()?;
            ua_freq.insert(ua, self.u64()?);
        }
        let n = self.len(8)?;
        let mut transitions = BTreeSet::new();
        for _ in 0..n {
            transitions.insert((self.str()?, self.str()?));
        }
        Ok(Baseline {
            known_hosts,
            ua_freq,
            transitions,
        })
    }

    fn cascade(&mut self) -> R<CascadeConfig> {
        let c = CascadeConfig {
            hi: self.f64()?,
            lo: self.f64()?,
            hash_dim: self.u32()?,
            min_len: self.u32()?,
            max_len: self.u32()?,
            feature_set: match self.u8()? {
                0 => FeatureSet::Strings,
                1 => FeatureSet::Full,
                f => return Err(malformed(format!("feature set {f}"))),
            },
        };
        c.validate().map_err(|e| malformed(e.to_string()))?;
        Ok(c)
    }
}

fn decode_payload(kind: ModelKind, body: &[u8]) -> R<Model> {
    let mut r = Reader { buf: body, pos: 0 };
    let m = match kind {
        ModelKind::Forest => {
            let forest = r.forest()?;
            let standardizer = r.standardizer()?;
            let names = r.strs()?;
            let normal = r.str()?;
            Model::Forest(
                TrafficClassifier::new(forest, standardizer, names, normal).map_err(|e| malformed(e.to_string()))?,
            )
        }
        ModelKind::Isoforest => Model::Isoforest(r.iso()?),
        ModelKind::Seqnet => Model::Seqnet(r.seq()?),
        ModelKind::WidsBundle => {
            let standardizer = r.standardizer()?;
            let model = r.iso()?;
            let baseline = r.baseline()?;
            let window_seconds = r.u64()?;
            let alert_threshold = r.u64()? as usize;
            if standardizer.dim() != model.n_features() {
                return Err(malformed("standardizer and model dimensions differ"));
            }
            Model::Wids(WidsModel {
                standardizer,
                model,
                baseline,
                window_seconds,
                alert_threshold,
            })
        }
        ModelKind::MalwareBundle => {
            let forest = r.forest()?;
            let classifier = r.seq()?;
            let cfg = r.cascade()?;
            if forest.n_features() != cfg.hash_dim {
                return Err(malformed("forest width differs from hash dimension"));
            }
            Model::Malware(MalwareBundle {
                forest,
                classifier,
                cfg,
            })
        }
    };
    if r.pos != body.len() {
        return Err(malformed(format!("{} trailing payload bytes", body.len() - r.pos)));
    }
    Ok(m)
}

/// Container header and metadata without decoding the payload.
pub fn read_metadata(bytes: &[u8]) -> R<Metadata> {
    let (_, meta, _) = split(bytes)?;
    Ok(meta)
}

fn split(bytes: &[u8]) -> R<(ModelKind, Metadata, &[u8])> {
    let truncated = || ContainerError::Checksum("file is truncated".into());
    if bytes.len() < 4 {
        return Err(truncated());
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    if bytes.len() < 12 {
        return Err(truncated());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let kind = ModelKind::from_code(bytes[6])?;
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let meta_end = 12usize.checked_add(meta_len).ok_or_else(truncated)?;
    let meta_bytes = bytes.get(12..meta_end).ok_or_else(truncated)?;
    let len_bytes = bytes.get(meta_end..meta_end + 8).ok_or_else(truncated)?;
    let body_len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes"));
    let body_start = meta_end + 8;
    let body_end = usize::try_from(body_len)
        .ok()
        .and_then(|l| body_start.checked_add(l))
        .ok_or_else(truncated)?;
    let body = bytes.get(body_start..body_end).ok_or_else(truncated)?;
    let sum_bytes = bytes.get(body_end..body_end + 8).ok_or_else(truncated)?;
    let stored = u64::from_le_bytes(sum_bytes.try_into().expect("8 bytes"));
    let actual = fnv1a64(body);
    if stored != actual {
        return Err(ContainerError::Checksum(format!(
            "stored {stored:016x}, computed {actual:016x}"
        )));
    }
    if bytes.len() != body_end + 8 {
        return Err(malformed("trailing bytes after checksum"));
    }
    let meta: Metadata = serde_json::from_slice(meta_bytes).map_err(|e| malformed(format!("metadata: {e}")))?;
    if meta.kind != kind {
        return Err(malformed("metadata kind disagrees with header"));
    }
    Ok((kind, meta, body))
}

pub fn decode_model(bytes: &[u8]) -> R<Model> {
    let (kind, _, body) = split(bytes)?;
    decode_payload(kind, body)
}

pub fn load_model(path: impl AsRef<Path>) -> R<Model> {
    decode_model(&std::fs::read(path)?)
}

/// Loads a model and checks its kind.
pub fn load_kind(path: impl AsRef<Path>, expected: ModelKind) -> R<Model> {
    let m = load_model(path)?;
    if m.kind() != expected {
        return Err(ContainerError::WrongKind {
            expected,
            found: m.kind(),
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::fit_forest;
    use crate::isoforest::fit_iforest;
    use crate::matrix::Matrix;
    use crate::tabular::Dataset;
    use rand::Rng as _;

    fn small_classifier() -> TrafficClassifier {
        let mut rng = crate::rng::seeded(3);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<usize> = rows.iter().map(|r| usize::from(r[0] + r[1] > 0.0)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let ds = Dataset::new(x.clone(), y, vec!["normal".into(), "attack".into()], names.clone()).unwrap();
        let params = ForestParams {
            n_estimators: 5,
            ..ForestParams::default()
        };
        let forest = fit_forest(&ds, &params).unwrap();
        let st = Standardizer::fit(&x).unwrap();
        TrafficClassifier::new(forest, st, names, "normal").unwrap()
    }

    #[test]
    fn forest_round_trip() {
        let m = Model::Forest(small_classifier());
        let bytes = encode_model(&m);
        assert_eq!(&bytes[..4], b"AIDR");
        assert_eq!(decode_model(&bytes).unwrap(), m);
        assert_eq!(encode_model(&decode_model(&bytes).unwrap()), bytes);
        let meta = read_metadata(&bytes).unwrap();
        assert_eq!(meta.kind, ModelKind::Forest);
        assert_eq!(meta.classes, vec!["normal", "attack"]);
    }

    #[test]
    fn iso_round_trip() {
        let mut rng = crate::rng::seeded(4);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random(), rng.random()]).collect();
        let iso = fit_iforest(
            &Matrix::from_rows(&rows).unwrap(),
            &IsoParams {
                num_trees: 7,
                num_samples: 32,
                ..IsoParams::default()
            },
        )
        .unwrap();
        let m = Model::Isoforest(iso);
        assert_eq!(decode_model(&encode_model(&m)).unwrap(), m);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_model(&Model::Forest(small_classifier()));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(ContainerError::BadMagic(_))));
        assert!(decode_model(&bad).unwrap_err().to_string().contains("bad magic"));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_model(&bad), Err(ContainerError::UnsupportedVersion(9))));

        for cut in [bytes.len() - 1, bytes.len() - 20, bytes.len() / 2, 13] {
            assert!(
                matches!(decode_model(&bytes[..cut]), Err(ContainerError::Checksum(_))),
                "cut at {cut}"
            );
        }

        let mut bad = bytes.clone();
        let mid = bytes.len() - 30;
        bad[mid] ^= 0x40;
        assert!(matches!(decode_model(&bad), Err(ContainerError::Checksum(_))));
    }
}
