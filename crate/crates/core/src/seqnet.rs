//! Token sequences → embedding → single-layer LSTM → dense sigmoid.
//!
//! A small binary sequence classifier trained with backpropagation through
//! time and Adam. All parameters live in one flat `Vec<f64>` with a fixed
//! layout (see [`Dims`]), which keeps the optimizer, the gradient check and
//! persistence simple.
//!
//! Conventions:
//! - index 0 is padding, 1 is out-of-vocabulary, words start at 2;
//! - sequences are post-padded and post-truncated to `max_len`;
//! - padding is not masked: pad steps run through the recurrence like any
//!   other token, with their own learned embedding row;
//! - gate order inside the stacked weights is input, forget, candidate,
//!   output.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const PAD: u32 = 0;
pub const OOV: u32 = 1;
/// Probabilities are clamped into `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum SeqError {
    #[error("vocabulary size must be >= 1")]
    EmptyVocab,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("token index {index} out of range for {rows} embedding rows")]
    IndexOutOfRange { index: u32, rows: usize },
    #[error("label {0} is not binary")]
    NonBinaryLabel(u8),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed model: {0}")]
    Malformed(String),
}

/// Frequency-ranked vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    /// `words[i]` has index `i + 2`.
    words: Vec<String>,
    max_words: usize,
    index: HashMap<String, u32>,
}

impl Tokenizer {
    /// Keeps the `max_words` most frequent tokens; equal counts are ordered
    /// by first appearance in the corpus.
    pub fn fit<S: AsRef<str>>(corpus: &[Vec<S>], max_words: usize) -> Result<Self, SeqError> {
        if max_words < 1 {
            return Err(SeqError::EmptyVocab);
        }
        if corpus.is_empty() {
            return Err(SeqError::EmptyCorpus);
        }
        let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
        let mut order = 0usize;
        for doc in corpus {
            for tok in doc {
                let e = counts.entry(tok.as_ref()).or_insert((0, order));
                e.0 += 1;
                order += 1;
            }
        }
        let mut ranked: Vec<(&str, u64, usize)> = counts.into_iter().map(|(t, (c, f))| (t, c, f)).collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.truncate(max_words);
        Self::from_words(ranked.into_iter().map(|(t, ..)| t.to_string()).collect(), max_words)
    }

    pub fn from_words(words: Vec<String>, max_words: usize) -> Result<Self, SeqError> {
        if max_words < 1 {
            return Err(SeqError::EmptyVocab);
        }
        if words.len() > max_words {
            return Err(SeqError::Config("more words than max_words".into()));
        }
        let index: HashMap<String, u32> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + 2))
            .collect();
        if index.len() != words.len() {
            return Err(SeqError::Config("duplicate vocabulary entry".into()));
        }
        Ok(Self {
            words,
            max_words,
            index,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn max_words(&self) -> usize {
        self.max_words
    }

    /// Embedding rows needed for this tokenizer: `max_words + 2`.
    pub fn embedding_rows(&self) -> usize {
        self.max_words + 2
    }

    pub fn index_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    /// Maps tokens to indices, then post-pads with [`PAD`] or keeps the
    /// first `max_len` indices.
    pub fn encode_pad<S: AsRef<str>>(&self, doc: &[S], max_len: usize) -> Vec<u32> {
        let mut out: Vec<u32> = doc.iter().take(max_len).map(|t| self.index_of(t.as_ref())).collect();
        out.resize(max_len, PAD);
        out
    }
}

/// Shape of a [`SequenceModel`] and the layout of its flat parameter vector:
/// embedding `(rows x E)`, input weights `(4H x E)`, recurrent weights
/// `(4H x H)`, gate bias `(4H)`, dense weights `(H)`, dense bias `(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab_rows: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub max_len: usize,
}

impl Dims {
    fn emb_len(&self) -> usize {
        self.vocab_rows * self.embed_dim
    }
    fn wx_off(&self) -> usize {
        self.emb_len()
    }
    fn wh_off(&self) -> usize {
        self.wx_off() + 4 * self.hidden * self.embed_dim
    }
    fn b_off(&self) -> usize {
        self.wh_off() + 4 * self.hidden * self.hidden
    }
    fn wout_off(&self) -> usize {
        self.b_off() + 4 * self.hidden
    }
    fn bout_off(&self) -> usize {
        self.wout_off() + self.hidden
    }
    pub fn n_params(&self) -> usize {
        self.bout_off() + 1
    }
}

/// Views into a flat parameter (or gradient) vector.
struct View<'a> {
    emb: &'a [f64],
    wx: &'a [f64],
    wh: &'a [f64],
    b: &'a [f64],
    wout: &'a [f64],
    bout: f64,
}

fn view<'a>(d: &Dims, p: &'a [f64]) -> View<'a> {
    View {
        emb: &p[..d.wx_off()],
        wx: &p[d.wx_off()..d.wh_off()],
        wh: &p[d.wh_off()..d.b_off()],
        b: &p[d.b_off()..d.wout_off()],
        wout: &p[d.wout_off()..d.bout_off()],
        bout: p[d.bout_off()],
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Binary cross-entropy with the probability clamped into
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce(p: f64, y: f64) -> f64 {
    let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceModel {
    dims: Dims,
    params: Vec<f64>,
}

/// Per-step activations kept for the backward pass.
struct Trace {
    /// Gate activations per step, `4H` each: i, f, g, o.
    gates: Vec<f64>,
    /// Cell states `c_0 .. c_T` (index 0 is the zero initial state).
    cells: Vec<f64>,
    /// Hidden states `h_0 .. h_T`.
    hidden: Vec<f64>,
    logit: f64,
}

impl SequenceModel {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights (fan-in `E` for the
    /// embedding and input weights, `H` for the recurrent and dense weights),
    /// zero biases except the forget gate, which starts at 1.
    pub fn new(dims: Dims, seed: u64) -> Result<Self, SeqError> {
        Self::check_dims(&dims)?;
        let mut rng = rng::seeded(seed);
        let mut params = vec![0.0; dims.n_params()];
        let e = dims.embed_dim as f64;
        let h = dims.hidden as f64;
        let mut fill = |range: std::ops::Range<usize>, fan_in: f64| {
            let a = 1.0 / fan_in.sqrt();
            for v in &mut params[range] {
                *v = rng.random_range(-a..a);
            }
        };
        fill(0..dims.wx_off(), e);
        fill(dims.wx_off()..dims.wh_off(), e);
        fill(dims.wh_off()..dims.b_off(), h);
        fill(dims.wout_off()..dims.bout_off(), h);
        let hd = dims.hidden;
        params[dims.b_off() + hd..dims.b_off() + 2 * hd].fill(1.0);
        Ok(Self { dims, params })
    }

    pub fn zeros(dims: Dims) -> Result<Self, SeqError> {
        Self::check_dims(&dims)?;
        Ok(Self {
            dims,
            params: vec![0.0; dims.n_params()],
        })
    }

    pub fn from_params(dims: Dims, params: Vec<f64>) -> Result<Self, SeqError> {
        Self::check_dims(&dims)?;
        if params.len() != dims.n_params() {
            return Err(SeqError::Malformed(format!(
                "expected {} parameters, found {}",
                dims.n_params(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(SeqError::Malformed("non-finite parameter".into()));
        }
        Ok(Self { dims, params })
    }

    fn check_dims(d: &Dims) -> Result<(), SeqError> {
        if d.vocab_rows < 2 || d.embed_dim == 0 || d.hidden == 0 || d.max_len == 0 {
            return Err(SeqError::Config(format!("invalid dimensions {d:?}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_seq(&self, seq: &[u32]) -> Result<(), SeqError> {
        match seq.iter().find(|&&i| i as usize >= self.dims.vocab_rows) {
            Some(&index) => Err(SeqError::IndexOutOfRange {
                index,
                rows: self.dims.vocab_rows,
            }),
            None => Ok(()),
        }
    }

    fn run(&self, seq: &[u32], keep: bool) -> Trace {
        let d = &self.dims;
        let (e, h) = (d.embed_dim, d.hidden);
        let p = view(d, &self.params);
        let steps = seq.len();
        let mut gates = if keep {
            Vec::with_capacity(steps * 4 * h)
        } else {
            Vec::new()
        };
        let mut cells = vec![0.0; h];
        let mut hidden = vec![0.0; h];
        let mut c = vec![0.0; h];
        let mut hs = vec![0.0; h];
        let mut a = vec![0.0; 4 * h];
        for &tok in seq {
            let x = &p.emb[tok as usize * e..(tok as usize + 1) * e];
            for (r, ar) in a.iter_mut().enumerate() {
                let wx = &p.wx[r * e..(r + 1) * e];
                let wh = &p.wh[r * h..(r + 1) * h];
                let mut s = p.b[r];
                for (w, v) in wx.iter().zip(x) {
                    s += w * v;
                }
                for (w, v) in wh.iter().zip(&hs) {
                    s += w * v;
                }
                *ar = s;
            }
            for j in 0..h {
                let i = sigmoid(a[j]);
                let f = sigmoid(a[h + j]);
                let g = a[2 * h + j].tanh();
                let o = sigmoid(a[3 * h + j]);
                c[j] = f * c[j] + i * g;
                hs[j] = o * c[j].tanh();
                a[j] = i;
                a[h + j] = f;
                a[2 * h + j] = g;
                a[3 * h + j] = o;
            }
            if keep {
                gates.extend_from_slice(&a);
                cells.extend_from_slice(&c);
                hidden.extend_from_slice(&hs);
            }
        }
        let mut logit = p.bout;
        for (w, v) in p.wout.iter().zip(&hs) {
            logit += w * v;
        }
        if !keep {
            hidden = hs;
        }
        Trace {
            gates,
            cells,
            hidden,
            logit,
        }
    }

    /// Probability of the positive class for an encoded sequence.
    pub fn forward(&self, seq: &[u32]) -> Result<f64, SeqError> {
        self.check_seq(seq)?;
        Ok(sigmoid(self.run(seq, false).logit))
    }

    /// Loss of one example, accumulating its gradient into `grad`.
    fn backward_into(&self, seq: &[u32], y: f64, grad: &mut [f64]) -> f64 {
        let d = self.dims;
        let (e, h) = (d.embed_dim, d.hidden);
        let tr = self.run(seq, true);
        let p = sigmoid(tr.logit);
        let loss = bce(p, y);
        // Inside the clamp the BCE/sigmoid derivative collapses to p - y;
        // outside it the clamped loss is flat.
        let dz = if (BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
            p - y
        } else {
            0.0
        };
        if dz == 0.0 {
            return loss;
        }
        let pv = view(&d, &self.params);
        let steps = seq.len();
        let h_last = &tr.hidden[steps * h..(steps + 1) * h];
        let (wout_off, bout_off) = (d.wout_off(), d.bout_off());
        for k in 0..h {
            grad[wout_off + k] += dz * h_last[k];
        }
        grad[bout_off] += dz;

        let mut dh: Vec<f64> = pv.wout.iter().map(|w| dz * w).collect();
        let mut dc = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];
        let (wx_off, wh_off, b_off) = (d.wx_off(), d.wh_off(), d.b_off());
        for t in (0..steps).rev() {
            let gt = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &tr.cells[t * h..(t + 1) * h];
            let c_t = &tr.cells[(t + 1) * h..(t + 2) * h];
            let h_prev = &tr.hidden[t * h..(t + 1) * h];
            for j in 0..h {
                let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let tc = c_t[j].tanh();
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                let di = dc[j] * g;
                let dg = dc[j] * i;
                let df = dc[j] * c_prev[j];
                da[j] = di * i * (1.0 - i);
                da[h + j] = df * f * (1.0 - f);
                da[2 * h + j] = dg * (1.0 - g * g);
                da[3 * h + j] = d_o * o * (1.0 - o);
                dc[j] *= f;
            }
            let tok = seq[t] as usize;
            let x = &pv.emb[tok * e..(tok + 1) * e];
            dh.iter_mut().for_each(|v| *v = 0.0);
            let emb_off = tok * e;
            for r in 0..4 * h {
                let g = da[r];
                if g == 0.0 {
                    continue;
                }
                grad[b_off + r] += g;
                let wx_row = &pv.wx[r * e..(r + 1) * e];
                for k in 0..e {
                    grad[wx_off + r * e + k] += g * x[k];
                    grad[emb_off + k] += g * wx_row[k];
                }
                let wh_row = &pv.wh[r * h..(r + 1) * h];
                for k in 0..h {
                    grad[wh_off + r * h + k] += g * h_prev[k];
                    dh[k] += g * wh_row[k];
                }
            }
        }
        loss
    }

    /// Loss and full gradient of one example.
    pub fn loss_and_grad(&self, seq: &[u32], label: u8) -> Result<(f64, Vec<f64>), SeqError> {
        self.check_seq(seq)?;
        if label > 1 {
            return Err(SeqError::NonBinaryLabel(label));
        }
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.backward_into(seq, f64::from(label), &mut grad);
        Ok((loss, grad))
    }

    pub fn loss(&self, seq: &[u32], label: u8) -> Result<f64, SeqError> {
        Ok(bce(self.forward(seq)?, f64::from(label)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Rescale each batch gradient to at most this L2 norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 42,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SeqError> {
        if self.epochs < 1 {
            return Err(SeqError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(SeqError::Config("batch_size must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(SeqError::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(SeqError::Config("betas must lie in [0, 1)".into()));
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(SeqError::Config("clip_norm must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub seq: Vec<u32>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the whole training set after each epoch.
    pub loss_history: Vec<f64>,
    pub final_accuracy: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
        }
    }
}

/// Minimizes mean binary cross-entropy over shuffled mini-batches.
/// Deterministic given the model and `cfg.seed`.
pub fn train(model: &mut SequenceModel, data: &[Example], cfg: &TrainConfig) -> Result<TrainReport, SeqError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(SeqError::EmptyCorpus);
    }
    for ex in data {
        if ex.label > 1 {
            return Err(SeqError::NonBinaryLabel(ex.label));
        }
        model.check_seq(&ex.seq)?;
    }
    let n_params = model.params.len();
    let mut adam = Adam {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; n_params];
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let ex = &data[i];
                model.backward_into(&ex.seq, f64::from(ex.label), &mut grad);
            }
            let mut scale = 1.0 / batch.len() as f64;
            if let Some(c) = cfg.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() * scale;
                if norm > c {
                    scale *= c / norm;
                }
            }
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(cfg, &mut model.params, &grad);
        }
        let (loss, _) = evaluate(model, data);
        log::debug!("epoch {epoch}: loss {loss:.6}");
        loss_history.push(loss);
    }
    let (_, final_accuracy) = evaluate(model, data);
    Ok(TrainReport {
        loss_history,
        final_accuracy,
    })
}

/// Mean loss and accuracy (threshold 0.5) over already-validated examples.
pub fn evaluate(model: &SequenceModel, data: &[Example]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in data {
        let p = sigmoid(model.run(&ex.seq, false).logit);
        loss += bce(p, f64::from(ex.label));
        if (p > 0.5) == (ex.label == 1) {
            correct += 1;
        }
    }
    let n = data.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Gradients smaller than this in magnitude are compared on an absolute
/// scale, so double-precision noise around zero does not read as error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;

/// Largest relative error between the analytic gradient and central finite
/// differences over every parameter. A parameter where both are exactly zero
/// contributes 0.
pub fn grad_check(model: &SequenceModel, seq: &[u32], label: u8) -> Result<f64, SeqError> {
    let (_, analytic) = model.loss_and_grad(seq, label)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + GRAD_CHECK_STEP;
        let plus = probe.loss(seq, label)?;
        probe.params[i] = orig - GRAD_CHECK_STEP;
        let minus = probe.loss(seq, label)?;
        probe.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let err = if a == 0.0 && numeric == 0.0 {
            0.0
        } else {
            (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Tokenizer plus trained model: scores raw token documents.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceClassifier {
    pub tokenizer: Tokenizer,
    pub model: SequenceModel,
}

impl SequenceClassifier {
    pub fn new(tokenizer: Tokenizer, model: SequenceModel) -> Result<Self, SeqError> {
        if model.dims().vocab_rows != tokenizer.embedding_rows() {
            return Err(SeqError::Config(format!(
                "model has {} embedding rows, tokenizer needs {}",
                model.dims().vocab_rows,
                tokenizer.embedding_rows()
            )));
        }
        Ok(Self { tokenizer, model })
    }

    pub fn encode<S: AsRef<str>>(&self, doc: &[S]) -> Vec<u32> {
        self.tokenizer.encode_pad(doc, self.model.dims().max_len)
    }

    pub fn predict<S: AsRef<str>>(&self, doc: &[S]) -> f64 {
        let seq = self.encode(doc);
        self.model.forward(&seq).expect("tokenizer indices fit the embedding")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn tokenizer_frequency_then_first_appearance() {
        let t = Tokenizer::fit(&[doc("a b a")], 10).unwrap();
        assert_eq!(t.index_of("a"), 2);
        assert_eq!(t.index_of("b"), 3);
        let t1 = Tokenizer::fit(&[doc("a b a")], 1).unwrap();
        assert_eq!(t1.words(), ["a"]);
        assert_eq!(t1.index_of("b"), OOV);
        // Tie: c and d both appear twice; c appears first.
        let t = Tokenizer::fit(&[doc("c d"), doc("d c e")], 10).unwrap();
        assert_eq!(t.words(), ["c", "d", "e"]);
    }

    #[test]
    fn tokenizer_errors() {
        assert_eq!(Tokenizer::fit(&[doc("a")], 0), Err(SeqError::EmptyVocab));
        let empty: Vec<Vec<String>> = vec![];
        assert_eq!(Tokenizer::fit(&empty, 3), Err(SeqError::EmptyCorpus));
    }

    #[test]
    fn encode_pad_rules() {
        let t = Tokenizer::fit(&[doc("a")], 5).unwrap();
        assert_eq!(t.encode_pad(&doc("a"), 3), [2, 0, 0]);
        assert_eq!(t.encode_pad(&doc("zzz"), 3), [1, 0, 0]);
        assert_eq!(t.encode_pad(&doc("a zzz a a zzz"), 3), [2, 1, 2]);
    }

    fn dims(e: usize, h: usize, t: usize) -> Dims {
        Dims {
            vocab_rows: 6,
            embed_dim: e,
            hidden: h,
            max_len: t,
        }
    }

    #[test]
    fn zero_weights_give_one_half() {
        let m = SequenceModel::zeros(dims(3, 4, 5)).unwrap();
        assert_eq!(m.forward(&[2, 3, 1, 0, 0]).unwrap(), 0.5);
        assert_eq!(m.forward(&[5, 5, 5, 5, 5]).unwrap(), 0.5);
    }

    #[test]
    fn out_of_range_index_rejected() {
        let m = SequenceModel::zeros(dims(2, 2, 2)).unwrap();
        assert_eq!(m.forward(&[6, 0]), Err(SeqError::IndexOutOfRange { index: 6, rows: 6 }));
    }

    #[test]
    fn train_rejects_bad_input() {
        let mut m = SequenceModel::new(dims(2, 2, 2), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let data = vec![Example {
            seq: vec![2, 0],
            label: 1,
        }];
        assert!(matches!(train(&mut m, &data, &cfg), Err(SeqError::Config(_))));
        let bad = vec![Example {
            seq: vec![2, 0],
            label: 2,
        }];
        assert_eq!(
            train(&mut m, &bad, &TrainConfig::default()),
            Err(SeqError::NonBinaryLabel(2))
        );
        assert_eq!(train(&mut m, &[], &TrainConfig::default()), Err(SeqError::EmptyCorpus));
    }

    #[test]
    fn bce_is_finite_at_extremes() {
        assert!(bce(0.0, 1.0).is_finite());
        assert!(bce(1.0, 0.0).is_finite());
        assert!((bce(0.5, 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let d = dims(2, 3, 4);
        let m = SequenceModel::new(d, 7).unwrap();
        let b = &m.params()[d.b_off()..d.wout_off()];
        assert_eq!(&b[..3], &[0.0; 3]);
        assert_eq!(&b[3..6], &[1.0; 3]);
        assert_eq!(&b[6..], &[0.0; 6]);
        assert_eq!(m.params()[d.bout_off()], 0.0);
    }

    #[test]
    fn unused_embedding_row_has_zero_gradient() {
        let d = dims(2, 3, 4);
        let m = SequenceModel::new(d, 3).unwrap();
        let (_, g) = m.loss_and_grad(&[2, 3, 0, 0], 1).unwrap();
        // Row 5 never appears in the sequence.
        assert!(g[5 * 2..6 * 2].iter().all(|&v| v == 0.0));
    }
}
