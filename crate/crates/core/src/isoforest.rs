//! Isolation Forest: random isolation trees over subsamples, the normalized
//! path-length anomaly score, and a contamination-quantile threshold.
//!
//! Higher scores are more anomalous. A point is flagged when its score is
//! strictly greater than the model threshold, which is placed so that at
//! most `floor(contamination * n)` training rows are flagged.

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng;

/// Euler–Mascheroni constant, as used in the harmonic-number approximation.
pub const EULER_GAMMA: f64 = 0.577_215_664_9;

#[derive(Debug, Error, PartialEq)]
pub enum IsoError {
    #[error("isolation forest needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("feature column {0} is entirely NaN")]
    AllNan(usize),
    #[error("row {row}, feature {feature}: non-finite value")]
    NonFinite { row: usize, feature: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("dimension mismatch: model expects {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("malformed model: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoParams {
    pub num_trees: usize,
    /// Subsample size per tree (capped at the number of rows).
    pub num_samples: usize,
    pub contamination: f64,
    pub seed: u64,
}

impl Default for IsoParams {
    fn default() -> Self {
        Self {
            num_trees: 100,
            num_samples: 10_000,
            contamination: 0.01,
            seed: 100,
        }
    }
}

impl IsoParams {
    pub fn validate(&self) -> Result<(), IsoError> {
        if self.num_trees < 1 {
            return Err(IsoError::Params("num_trees must be >= 1".into()));
        }
        if self.num_samples < 2 {
            return Err(IsoError::Params("num_samples must be >= 2".into()));
        }
        if !(self.contamination > 0.0 && self.contamination < 0.5) {
            return Err(IsoError::Params(format!(
                "contamination {} outside (0, 0.5)",
                self.contamination
            )));
        }
        Ok(())
    }
}

/// Average path length of an unsuccessful BST search over `n` points:
/// `c(1) = 0`, `c(2) = 1`, `c(n) = 2 H(n-1) - 2 (n-1) / n` with
/// `H(i) = ln(i) + gamma`.
pub fn c_factor(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

/// `ceil(log2(psi))` for `psi >= 1`.
pub fn height_limit(psi: usize) -> usize {
    let mut h = 0;
    while (1usize << h) < psi {
        h += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IsoNode {
    /// Rows with `x[feature] < split` go left.
    Internal {
        feature: usize,
        split: f64,
        left: usize,
        right: usize,
    },
    External {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoTree {
    nodes: Vec<IsoNode>,
    height_limit: usize,
}

impl IsoTree {
    pub fn from_nodes(nodes: Vec<IsoNode>, height_limit: usize) -> Result<Self, IsoError> {
        if nodes.is_empty() {
            return Err(IsoError::Malformed("tree has no nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if let IsoNode::Internal { left, right, split, .. } = n {
                if *left <= i || *right <= i || *left >= nodes.len() || *right >= nodes.len() {
                    return Err(IsoError::Malformed(format!("node {i}: child index")));
                }
                if !split.is_finite() {
                    return Err(IsoError::Malformed(format!("node {i}: split value")));
                }
            }
        }
        let tree = Self { nodes, height_limit };
        if tree.height() > height_limit {
            return Err(IsoError::Malformed("tree exceeds its height limit".into()));
        }
        Ok(tree)
    }

    pub fn nodes(&self) -> &[IsoNode] {
        &self.nodes
    }

    pub fn height_limit(&self) -> usize {
        self.height_limit
    }

    pub fn height(&self) -> usize {
        fn walk(nodes: &[IsoNode], i: usize) -> usize {
            match &nodes[i] {
                IsoNode::External { .. } => 0,
                IsoNode::Internal { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Depth of the external node `x` reaches, plus `c(size)` for the
    /// unresolved rows left in that node.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        let mut depth = 0usize;
        loop {
            match &self.nodes[i] {
                IsoNode::Internal {
                    feature,
                    split,
                    left,
                    right,
                } => {
                    i = if x[*feature] < *split { *left } else { *right };
                    depth += 1;
                }
                IsoNode::External { size } => return depth as f64 + c_factor(*size),
            }
        }
    }
}

fn build_tree(x: &Matrix, mut rows: Vec<usize>, limit: usize, rng: &mut rng::Rng) -> IsoTree {
    let d = x.cols();
    let mut nodes = vec![IsoNode::External { size: 0 }];
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
    let mut lo_hi = vec![(0.0f64, 0.0f64); d];
    let mut spread: Vec<usize> = Vec::with_capacity(d);
    while let Some((slot, lo, hi, depth)) = stack.pop() {
        let node_rows = &mut rows[lo..hi];
        let size = node_rows.len();
        if depth >= limit || size <= 1 {
            nodes[slot] = IsoNode::External { size };
            continue;
        }
        for (j, mm) in lo_hi.iter_mut().enumerate() {
            let v = x.get(node_rows[0], j);
            *mm = (v, v);
        }
        for &r in node_rows.iter().skip(1) {
            for (j, mm) in lo_hi.iter_mut().enumerate() {
                let v = x.get(r, j);
                if v < mm.0 {
                    mm.0 = v;
                }
                if v > mm.1 {
                    mm.1 = v;
                }
            }
        }
        spread.clear();
        spread.extend((0..d).filter(|&j| lo_hi[j].0 < lo_hi[j].1));
        if spread.is_empty() {
            nodes[slot] = IsoNode::External { size };
            continue;
        }
        let feature = spread[rng.random_range(0..spread.len())];
        let (min, max) = lo_hi[feature];
        let mut split = min + rng.random::<f64>() * (max - min);
        if split <= min || split >= max {
            split = crate::forest::midpoint(min, max);
            if split <= min {
                split = max;
            }
        }
        let mut n_left = 0;
        for i in 0..size {
            if x.get(node_rows[i], feature) < split {
                node_rows.swap(i, n_left);
                n_left += 1;
            }
        }
        let left = nodes.len();
        nodes.push(IsoNode::External { size: 0 });
        nodes.push(IsoNode::External { size: 0 });
        nodes[slot] = IsoNode::Internal {
            feature,
            split,
            left,
            right: left + 1,
        };
        stack.push((left + 1, lo + n_left, hi, depth + 1));
        stack.push((left, lo, lo + n_left, depth + 1));
    }
    IsoTree {
        nodes,
        height_limit: limit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Normal,
    Anomaly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationModel {
    trees: Vec<IsoTree>,
    psi: usize,
    threshold: f64,
    c_psi: f64,
    n_features: usize,
    params: IsoParams,
}

fn check_matrix(x: &Matrix) -> Result<(), IsoError> {
    if x.rows() < 2 {
        return Err(IsoError::TooFewRows(x.rows()));
    }
    for j in 0..x.cols() {
        if x.column(j).all(f64::is_nan) {
            return Err(IsoError::AllNan(j));
        }
    }
    for (i, row) in x.iter_rows().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(IsoError::NonFinite { row: i, feature: j });
        }
    }
    Ok(())
}

/// Nearest-rank threshold: the `(n - m)`-th smallest training score with
/// `m = floor(contamination * n)`, so exactly `m` rows score above it when
/// there are no ties.
pub fn contamination_threshold(scores: &[f64], contamination: f64) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let m = ((contamination * n as f64) + 1e-9).floor() as usize;
    sorted[n - m.min(n - 1) - 1]
}

/// Fits `num_trees` isolation trees, tree `i` on a without-replacement
/// subsample drawn from the stream seeded by `mix64(seed, i)`, then places
/// the threshold at the `(1 - contamination)` quantile of training scores.
pub fn fit_iforest(x: &Matrix, params: &IsoParams) -> Result<IsolationModel, IsoError> {
    params.validate()?;
    check_matrix(x)?;
    let n = x.rows();
    let psi = params.num_samples.min(n);
    let limit = height_limit(psi);
    let trees: Vec<IsoTree> = (0..params.num_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::seeded(rng::mix64(params.seed, i as u64));
            let rows = index::sample(&mut rng, n, psi).into_vec();
            build_tree(x, rows, limit, &mut rng)
        })
        .collect();
    let mut model = IsolationModel {
        trees,
        psi,
        threshold: 1.0,
        c_psi: c_factor(psi),
        n_features: x.cols(),
        params: params.clone(),
    };
    let scores = model.scores(x)?;
    model.threshold = contamination_threshold(&scores, params.contamination);
    Ok(model)
}

impl IsolationModel {
    pub fn from_parts(
        trees: Vec<IsoTree>,
        psi: usize,
        threshold: f64,
        n_features: usize,
        params: IsoParams,
    ) -> Result<Self, IsoError> {
        if trees.is_empty() || psi < 2 {
            return Err(IsoError::Malformed("empty forest or psi < 2".into()));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(IsoError::Malformed(format!("threshold {threshold}")));
        }
        for t in &trees {
            for node in &t.nodes {
                if let IsoNode::Internal { feature, .. } = node {
                    if *feature >= n_features {
                        return Err(IsoError::Malformed("feature index".into()));
                    }
                }
            }
        }
        Ok(Self {
            trees,
            psi,
            threshold,
            c_psi: c_factor(psi),
            n_features,
            params,
        })
    }

    pub fn trees(&self) -> &[IsoTree] {
        &self.trees
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &IsoParams {
        &self.params
    }

    /// Mean path length over trees.
    pub fn expected_path_length(&self, x: &[f64]) -> Result<f64, IsoError> {
        if x.len() != self.n_features {
            return Err(IsoError::Dimension {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let total: f64 = self.trees.iter().map(|t| t.path_length(x)).sum();
        Ok(total / self.trees.len() as f64)
    }

    /// `2^(-E[h(x)] / c(psi))`.
    pub fn score(&self, x: &[f64]) -> Result<f64, IsoError> {
        Ok(score_from_path(self.expected_path_length(x)?, self.c_psi))
    }

    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>, IsoError> {
        let rows: Vec<&[f64]> = x.iter_rows().collect();
        rows.par_iter().map(|r| self.score(r)).collect()
    }

    pub fn decide_score(&self, score: f64) -> Decision {
        if score > self.threshold {
            Decision::Anomaly
        } else {
            Decision::Normal
        }
    }

    pub fn decide(&self, x: &[f64]) -> Result<Decision, IsoError> {
        self.score(x).map(|s| self.decide_score(s))
    }
}

pub fn score_from_path(expected_path: f64, c_psi: f64) -> f64 {
    2f64.powf(-expected_path / c_psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_factor_values() {
        assert_eq!(c_factor(1), 0.0);
        assert_eq!(c_factor(2), 1.0);
        let c256 = 2.0 * (255f64.ln() + EULER_GAMMA) - 2.0 * 255.0 / 256.0;
        assert_eq!(c_factor(256), c256);
    }

    #[test]
    fn height_limit_is_ceil_log2() {
        assert_eq!(height_limit(2), 1);
        assert_eq!(height_limit(3), 2);
        assert_eq!(height_limit(16), 4);
        assert_eq!(height_limit(17), 5);
        assert_eq!(height_limit(1000), 10);
    }

    #[test]
    fn path_length_examples() {
        // Root split isolates the query at depth 1 in a size-1 leaf.
        let t = IsoTree::from_nodes(
            vec![
                IsoNode::Internal {
                    feature: 0,
                    split: 0.5,
                    left: 1,
                    right: 2,
                },
                IsoNode::External { size: 1 },
                IsoNode::External { size: 7 },
            ],
            3,
        )
        .unwrap();
        assert_eq!(t.path_length(&[0.0]), 1.0);
        // Size-2 external node at depth 3: 3 + c(2).
        let chain = IsoTree::from_nodes(
            vec![
                IsoNode::Internal {
                    feature: 0,
                    split: 1.0,
                    left: 1,
                    right: 2,
                },
                IsoNode::Internal {
                    feature: 0,
                    split: 0.5,
                    left: 3,
                    right: 4,
                },
                IsoNode::External { size: 3 },
                IsoNode::Internal {
                    feature: 0,
                    split: 0.25,
                    left: 5,
                    right: 6,
                },
                IsoNode::External { size: 1 },
                IsoNode::External { size: 2 },
                IsoNode::External { size: 1 },
            ],
            3,
        )
        .unwrap();
        assert_eq!(chain.path_length(&[0.0]), 4.0);
    }

    #[test]
    fn score_fixed_point_and_limit() {
        assert_eq!(score_from_path(3.7, 3.7), 0.5);
        assert!(score_from_path(1e-12, 5.0) > 0.999_999);
    }

    #[test]
    fn identical_rows_give_single_external_nodes() {
        let x = Matrix::new(50, 2, vec![1.0; 100]).unwrap();
        let p = IsoParams {
            num_trees: 10,
            num_samples: 32,
            ..Default::default()
        };
        let m = fit_iforest(&x, &p).unwrap();
        assert!(m.trees().iter().all(|t| t.nodes().len() == 1));
        let s = m.scores(&x).unwrap();
        assert!(s.windows(2).all(|w| w[0] == w[1]));
        let flagged = s.iter().filter(|&&v| m.decide_score(v) == Decision::Anomaly).count();
        assert_eq!(flagged, 0);
    }

    #[test]
    fn score_at_threshold_is_normal() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [50.0]]).unwrap();
        let m = fit_iforest(
            &x,
            &IsoParams {
                num_trees: 5,
                contamination: 0.3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.decide_score(m.threshold()), Decision::Normal);
        assert_eq!(
            m.decide_score(f64::from_bits(m.threshold().to_bits() + 1)),
            Decision::Anomaly
        );
    }

    #[test]
    fn input_errors() {
        let p = IsoParams::default();
        assert_eq!(
            fit_iforest(&Matrix::from_rows(&[[1.0]]).unwrap(), &p),
            Err(IsoError::TooFewRows(1))
        );
        let nan = Matrix::from_rows(&[[1.0, f64::NAN], [2.0, f64::NAN]]).unwrap();
        assert_eq!(fit_iforest(&nan, &p), Err(IsoError::AllNan(1)));
        let bad = IsoParams {
            contamination: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let m = fit_iforest(&x, &p).unwrap();
        assert!(matches!(m.score(&[1.0, 2.0]), Err(IsoError::Dimension { .. })));
    }

    #[test]
    fn threshold_nearest_rank() {
        let scores: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let t = contamination_threshold(&scores, 0.01);
        assert_eq!(t, 0.989);
        assert_eq!(scores.iter().filter(|&&s| s > t).count(), 10);
    }
}
