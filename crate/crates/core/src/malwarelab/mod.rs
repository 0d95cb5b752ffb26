//! Static analysis of PE files and the forest/LSTM cascade that labels
//! them.

pub mod features;
pub mod pe;
pub mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{
    extract_indicators, extract_strings, featurize_hash, featurize_tokens, FeatureSet, HashedVector, Indicator,
    IndicatorKind, StaticFeatures,
};
pub use pe::{parse_pe, PeBuilder, PeError, PeInfo};
pub use report::{build_report, Report};

use crate::forest::{fit_forest, Forest, ForestError, ForestParams};
use crate::matrix::Matrix;
use crate::seqnet::{self, Dims, Example, SeqError, SequenceClassifier, SequenceModel, Tokenizer, TrainConfig};
use crate::tabular::{Dataset, TabularError};

pub const MALICIOUS: &str = "malicious";
pub const BENIGN: &str = "benign";

#[derive(Debug, Error)]
pub enum MalwareError {
    #[error("not a PE file")]
    NotPe,
    #[error(transparent)]
    Pe(#[from] PeError),
    #[error("invalid cascade config: {0}")]
    Config(String),
    #[error("no PE samples to train on")]
    NoSamples,
    #[error("training data needs both benign and malicious samples")]
    OneClass,
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    /// Forest probability at or above which a file is malicious outright.
    pub hi: f64,
    /// Forest probability below which a file is benign outright.
    pub lo: f64,
    pub hash_dim: usize,
    pub min_len: usize,
    /// Sequence length fed to the LSTM.
    pub max_len: usize,
    pub feature_set: FeatureSet,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            hi: 0.7,
            lo: 0.5,
            hash_dim: features::DEFAULT_HASH_DIM,
            min_len: features::DEFAULT_MIN_LEN,
            max_len: 48,
            feature_set: FeatureSet::Full,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<(), MalwareError> {
        if !(0.0 < self.lo && self.lo < self.hi && self.hi <= 1.0) {
            return Err(MalwareError::Config(format!(
                "need 0 < lo < hi <= 1, got lo {} hi {}",
                self.lo, self.hi
            )));
        }
        if self.hash_dim < 2 || !self.hash_dim.is_power_of_two() {
            return Err(MalwareError::Config(format!(
                "hash_dim {} is not a power of two >= 2",
                self.hash_dim
            )));
        }
        if self.min_len < 1 || self.max_len < 1 {
            return Err(MalwareError::Config("min_len and max_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Secondary model threshold.
pub const LSTM_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Malicious,
    Benign,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Malicious => MALICIOUS,
            Label::Benign => BENIGN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecidedBy {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSummary {
    pub ipv4: usize,
    pub hostname: usize,
    pub url: usize,
    pub imports: usize,
    pub strings: usize,
}

impl EvidenceSummary {
    pub fn of(f: &StaticFeatures) -> Self {
        let n = |k| f.indicators.iter().filter(|i| i.kind == k).count();
        Self {
            ipv4: n(IndicatorKind::Ipv4),
            hostname: n(IndicatorKind::Hostname),
            url: n(IndicatorKind::Url),
            imports: f.import_tokens.len(),
            strings: f.strings.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub rf_probability: f64,
    pub lstm_probability: Option<f64>,
    pub decided_by: DecidedBy,
    pub evidence: EvidenceSummary,
}

impl Verdict {
    /// The routing invariant: the secondary model decides exactly when the
    /// forest probability falls in `[lo, hi)`, and only then has a score.
    pub fn is_consistent(&self, cfg: &CascadeConfig) -> bool {
        let in_band = cfg.lo <= self.rf_probability && self.rf_probability < cfg.hi;
        let secondary = self.decided_by == DecidedBy::Secondary;
        secondary == in_band && secondary == self.lstm_probability.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Primary(Label),
    Secondary,
}

/// Where a forest probability sends a file: `p >= hi` malicious,
/// `p < lo` benign, otherwise to the LSTM.
pub fn route(p: f64, cfg: &CascadeConfig) -> Route {
    if p >= cfg.hi {
        Route::Primary(Label::Malicious)
    } else if p >= cfg.lo {
        Route::Secondary
    } else {
        Route::Primary(Label::Benign)
    }
}

/// Applies the cascade to a forest probability. `lstm` runs only when the
/// probability lands in the band.
pub fn decide(p: f64, cfg: &CascadeConfig, evidence: EvidenceSummary, lstm: impl FnOnce() -> f64) -> Verdict {
    match route(p, cfg) {
        Route::Primary(label) => Verdict {
            label,
            rf_probability: p,
            lstm_probability: None,
            decided_by: DecidedBy::Primary,
            evidence,
        },
        Route::Secondary => {
            let q = lstm();
            Verdict {
                label: if q > LSTM_THRESHOLD {
                    Label::Malicious
                } else {
                    Label::Benign
                },
                rf_probability: p,
                lstm_probability: Some(q),
                decided_by: DecidedBy::Secondary,
                evidence,
            }
        }
    }
}

/// Headers and static features of a PE file.
pub fn analyze(bytes: &[u8], min_len: usize) -> Result<(PeInfo, StaticFeatures), MalwareError> {
    let info = parse_pe(bytes)?;
    if !info.is_pe {
        return Err(MalwareError::NotPe);
    }
    let feats = StaticFeatures::from_parts(extract_strings(bytes, min_len), info.import_tokens());
    Ok((info, feats))
}

/// Trained forest and LSTM with the featurization they share.
#[derive(Debug, Clone, PartialEq)]
pub struct MalwareBundle {
    pub forest: Forest,
    pub classifier: SequenceClassifier,
    pub cfg: CascadeConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub info: PeInfo,
    pub features: StaticFeatures,
    pub verdict: Verdict,
}

impl MalwareBundle {
    pub fn rf_probability(&self, feats: &StaticFeatures) -> Result<f64, MalwareError> {
        let x = featurize_hash(feats, self.cfg.feature_set, self.cfg.hash_dim).to_dense();
        let p = self.forest.predict_proba(&x)?;
        let k = self
            .forest
            .class_index(MALICIOUS)
            .ok_or_else(|| MalwareError::Config("forest has no malicious class".into()))?;
        Ok(p[k])
    }

    pub fn lstm_probability(&self, feats: &StaticFeatures) -> f64 {
        self.classifier.predict(&feats.tokens(self.cfg.feature_set))
    }

    pub fn classify_features(&self, feats: &StaticFeatures) -> Result<Verdict, MalwareError> {
        let p = self.rf_probability(feats)?;
        Ok(decide(p, &self.cfg, EvidenceSummary::of(feats), || {
            self.lstm_probability(feats)
        }))
    }

    pub fn report(&self, bytes: &[u8]) -> Result<Report, MalwareError> {
        let a = cascade_classify(self, bytes)?;
        Ok(build_report(&a.info, &a.features, &a.verdict))
    }
}

pub fn cascade_classify(bundle: &MalwareBundle, bytes: &[u8]) -> Result<Analysis, MalwareError> {
    let (info, features) = analyze(bytes, bundle.cfg.min_len)?;
    let verdict = bundle.classify_features(&features)?;
    Ok(Analysis {
        info,
        features,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalwareTrainParams {
    pub forest: ForestParams,
    pub lstm: TrainConfig,
    pub embed_dim: usize,
    pub hidden: usize,
    pub max_words: usize,
}

impl Default for MalwareTrainParams {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            lstm: TrainConfig {
                epochs: 20,
                learning_rate: 0.002,
                clip_norm: Some(0.5),
                ..TrainConfig::default()
            },
            embed_dim: 16,
            hidden: 16,
            max_words: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub used: usize,
    /// Inputs that were not PE files.
    pub skipped: usize,
    pub lstm_loss: Vec<f64>,
    pub lstm_train_accuracy: f64,
}

/// Featurized training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub features: Vec<StaticFeatures>,
    pub malicious: Vec<bool>,
    pub skipped: usize,
}

impl Corpus {
    pub fn from_files(files: &[(Vec<u8>, bool)], min_len: usize) -> Result<Self, MalwareError> {
        let mut c = Corpus {
            features: Vec::new(),
            malicious: Vec::new(),
            skipped: 0,
        };
        for (bytes, mal) in files {
            match analyze(bytes, min_len) {
                Ok((_, f)) => {
                    c.features.push(f);
                    c.malicious.push(*mal);
                }
                Err(MalwareError::NotPe | MalwareError::Pe(_)) => c.skipped += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Corpus {
        Corpus {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            malicious: idx.iter().map(|&i| self.malicious[i]).collect(),
            skipped: 0,
        }
    }

    /// Hashed design matrix with classes `[benign, malicious]`.
    pub fn dataset(&self, set: FeatureSet, dim: usize) -> Result<Dataset, MalwareError> {
        let mut data = Vec::with_capacity(self.len() * dim);
        for f in &self.features {
            data.extend(featurize_hash(f, set, dim).to_dense());
        }
        let x = Matrix::new(self.len(), dim, data).expect("rows have hash_dim columns");
        let y = self.malicious.iter().map(|&m| usize::from(m)).collect();
        let names = (0..dim).map(|i| format!("h{i}")).collect();
        Ok(Dataset::new(x, y, vec![BENIGN.into(), MALICIOUS.into()], names)?)
    }
}

pub fn train_bundle(
    corpus: &Corpus,
    cfg: &CascadeConfig,
    params: &MalwareTrainParams,
) -> Result<(MalwareBundle, TrainSummary), MalwareError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(MalwareError::NoSamples);
    }
    let n_mal = corpus.malicious.iter().filter(|&&m| m).count();
    if n_mal == 0 || n_mal == corpus.len() {
        return Err(MalwareError::OneClass);
    }
    let ds = corpus.dataset(cfg.feature_set, cfg.hash_dim)?;
    let forest = fit_forest(&ds, &params.forest)?;

    let docs: Vec<Vec<String>> = corpus.features.iter().map(|f| f.tokens(cfg.feature_set)).collect();
    let tokenizer = Tokenizer::fit(&docs, params.max_words)?;
    let dims = Dims {
        vocab_rows: tokenizer.embedding_rows(),
        embed_dim: params.embed_dim,
        hidden: params.hidden,
        max_len: cfg.max_len,
    };
    let mut model = SequenceModel::new(dims, params.lstm.seed)?;
    let examples: Vec<Example> = docs
        .iter()
        .zip(&corpus.malicious)
        .map(|(d, &m)| Example {
            seq: tokenizer.encode_pad(d, cfg.max_len),
            label: u8::from(m),
        })
        .collect();
    let rep = seqnet::train(&mut model, &examples, &params.lstm)?;
    let classifier = SequenceClassifier::new(tokenizer, model)?;
    Ok((
        MalwareBundle {
            forest,
            classifier,
            cfg: cfg.clone(),
        },
        TrainSummary {
            used: corpus.len(),
            skipped: corpus.skipped,
            lstm_loss: rep.loss_history,
            lstm_train_accuracy: rep.final_accuracy,
        },
    ))
}
