//! CART-style classification trees grown on Gini impurity, and a bootstrap
//! Random Forest built from them.
//!
//! Trees are grown without a depth limit: a node becomes a leaf when it is
//! pure, holds fewer than `min_samples_split` rows, or no candidate feature
//! separates its rows. Split thresholds are midpoints between consecutive
//! distinct sorted values, and `x[feature] <= threshold` goes left.
//!
//! Candidate splits are compared with exact integer arithmetic, so the
//! selected split (including the lowest-feature / lowest-threshold
//! tie-break) never depends on floating-point rounding.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng;
use crate::tabular::Dataset;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForestError {
    #[error("class counts are all zero")]
    EmptyCounts,
    #[error("cannot fit on an empty dataset")]
    Empty,
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("dimension mismatch: model expects {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("malformed tree: {0}")]
    Malformed(String),
}

/// Gini impurity `1 - sum(p_k^2)` of a class-count vector.
pub fn gini(counts: &[u32]) -> Result<f64, ForestError> {
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return Err(ForestError::EmptyCounts);
    }
    let sq: u64 = counts.iter().map(|&c| u64::from(c) * u64::from(c)).sum();
    Ok(1.0 - sq as f64 / (total as f64 * total as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Count-weighted mean of the two children's Gini impurity.
    pub weighted_gini: f64,
}

/// Midpoint of two consecutive distinct values, nudged so that `lo` goes
/// left and `hi` goes right even when the exact midpoint rounds to `hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

/// Split quality as the exact rational `num / den`, where
/// `num / den = sum(cl^2)/nl + sum(cr^2)/nr`. Larger is better (lower
/// weighted Gini).
#[derive(Debug, Clone, Copy)]
struct Quality {
    num: u128,
    den: u128,
}

impl Quality {
    fn new(sq_left: u64, n_left: u64, sq_right: u64, n_right: u64) -> Self {
        Self {
            num: u128::from(sq_left) * u128::from(n_right) + u128::from(sq_right) * u128::from(n_left),
            den: u128::from(n_left) * u128::from(n_right),
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }

    fn weighted_gini(&self, n: u64) -> f64 {
        1.0 - self.num as f64 / (self.den as f64 * n as f64)
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    quality: Quality,
}

impl Candidate {
    /// True when `self` should replace `best`: strictly better quality, or
    /// equal quality with a lower feature index or lower threshold.
    fn beats(&self, best: &Candidate) -> bool {
        match self.quality.cmp(&best.quality) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => {
                self.feature < best.feature || (self.feature == best.feature && self.threshold < best.threshold)
            }
        }
    }
}

/// Scratch buffers reused across nodes.
#[derive(Default)]
struct SplitScratch {
    pairs: Vec<(f64, usize)>,
    left: Vec<u32>,
    right: Vec<u32>,
}

fn search_features(
    x: &Matrix,
    y: &[usize],
    rows: &[usize],
    n_classes: usize,
    features: &[usize],
    scratch: &mut SplitScratch,
) -> Option<Candidate> {
    let n = rows.len() as u64;
    let mut best: Option<Candidate> = None;
    for &f in features {
        scratch.pairs.clear();
        scratch.pairs.extend(rows.iter().map(|&r| (x.get(r, f), y[r])));
        scratch.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let pairs = &scratch.pairs;
        if pairs[0].0 == pairs[pairs.len() - 1].0 {
            continue;
        }
        scratch.left.clear();
        scratch.left.resize(n_classes, 0);
        scratch.right.clear();
        scratch.right.resize(n_classes, 0);
        for &(_, c) in pairs.iter() {
            scratch.right[c] += 1;
        }
        // Running sums of squared counts, updated in O(1) per moved row.
        let mut sq_left: u64 = 0;
        let mut sq_right: u64 = scratch.right.iter().map(|&c| u64::from(c).pow(2)).sum();
        for i in 0..pairs.len() - 1 {
            let c = pairs[i].1;
            let l = u64::from(scratch.left[c]);
            let r = u64::from(scratch.right[c]);
            sq_left += 2 * l + 1;
            sq_right -= 2 * r - 1;
            scratch.left[c] += 1;
            scratch.right[c] -= 1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let n_left = i as u64 + 1;
            let cand = Candidate {
                feature: f,
                threshold: midpoint(pairs[i].0, pairs[i + 1].0),
                quality: Quality::new(sq_left, n_left, sq_right, n - n_left),
            };
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }
    }
    best
}

/// Best Gini split of all rows of `x` over `candidate_features`, or `None`
/// when no candidate feature takes two distinct values.
pub fn best_split(x: &Matrix, y: &[usize], candidate_features: &[usize]) -> Option<Split> {
    if x.rows() < 2 || y.len() != x.rows() {
        return None;
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();
    let mut scratch = SplitScratch::default();
    search_features(x, y, &rows, n_classes, &features, &mut scratch).map(|c| Split {
        feature: c.feature,
        threshold: c.threshold,
        weighted_gini: c.quality.weighted_gini(rows.len() as u64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub min_samples_split: usize,
    /// Bootstrap size per tree; `None` draws `n` rows.
    pub max_samples: Option<usize>,
    pub seed: u64,
    /// Features examined per split; `None` means `floor(sqrt(d))`.
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            min_samples_split: 2,
            max_samples: None,
            seed: 42,
            features_per_split: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_estimators < 1 {
            return Err(ForestError::Params("n_estimators must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ForestError::Params("min_samples_split must be >= 2".into()));
        }
        if self.max_samples == Some(0) {
            return Err(ForestError::Params("max_samples must be >= 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(ForestError::Params("features_per_split must be >= 1".into()));
        }
        Ok(())
    }

    pub fn features_for(&self, d: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
            .min(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

/// A decision tree stored as a node arena; the root is node 0 and children
/// always sit at higher indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    n_classes: usize,
}

impl Tree {
    /// Rebuilds a tree from its arena, checking the structural invariants.
    pub fn from_nodes(nodes: Vec<Node>, n_classes: usize) -> Result<Self, ForestError> {
        if nodes.is_empty() {
            return Err(ForestError::Malformed("no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            match node {
                Node::Internal {
                    threshold, left, right, ..
                } => {
                    if !threshold.is_finite() {
                        return Err(ForestError::Malformed(format!("node {i}: threshold")));
                    }
                    if *left <= i || *right <= i || *left >= nodes.len() || *right >= nodes.len() {
                        return Err(ForestError::Malformed(format!("node {i}: child index")));
                    }
                }
                Node::Leaf { counts } => {
                    if counts.len() != n_classes || counts.iter().all(|&c| c == 0) {
                        return Err(ForestError::Malformed(format!("node {i}: leaf counts")));
                    }
                }
            }
        }
        Ok(Self { nodes, n_classes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Class counts of the leaf `x` falls into.
    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let counts = self.leaf_counts(x);
        let total: u32 = counts.iter().sum();
        counts.iter().map(|&c| f64::from(c) / f64::from(total)).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Grows one tree on all rows of `x`. Candidate features at each node are a
/// seeded random subset of size `params.features_for(d)`.
pub fn fit_tree(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    rng_seed: u64,
) -> Result<Tree, ForestError> {
    params.validate()?;
    if x.is_empty() {
        return Err(ForestError::Empty);
    }
    check_labels(x, y, n_classes)?;
    let rows: Vec<usize> = (0..x.rows()).collect();
    Ok(grow(x, y, n_classes, rows, params, &mut rng::seeded(rng_seed)))
}

fn check_labels(x: &Matrix, y: &[usize], n_classes: usize) -> Result<(), ForestError> {
    if y.len() != x.rows() {
        return Err(ForestError::Dimension {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if y.iter().any(|&c| c >= n_classes) {
        return Err(ForestError::Params("label index out of range".into()));
    }
    Ok(())
}

fn grow(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    mut rows: Vec<usize>,
    params: &ForestParams,
    rng: &mut rng::Rng,
) -> Tree {
    let d = x.cols();
    let m = params.features_for(d);
    let mut scratch = SplitScratch::default();
    let mut nodes: Vec<Node> = vec![Node::Leaf { counts: Vec::new() }];
    // (node slot, start, end) ranges into `rows`.
    let mut stack = vec![(0usize, 0usize, rows.len())];
    while let Some((slot, lo, hi)) = stack.pop() {
        let node_rows = &mut rows[lo..hi];
        let mut counts = vec![0u32; n_classes];
        for &r in node_rows.iter() {
            counts[y[r]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || node_rows.len() < params.min_samples_split {
            nodes[slot] = Node::Leaf { counts };
            continue;
        }
        let mut features = index::sample(rng, d, m).into_vec();
        features.sort_unstable();
        let mut found = search_features(x, y, node_rows, n_classes, &features, &mut scratch);
        if found.is_none() && m < d {
            // Every drawn feature is constant here; fall back to the rest.
            let rest: Vec<usize> = (0..d).filter(|f| features.binary_search(f).is_err()).collect();
            found = search_features(x, y, node_rows, n_classes, &rest, &mut scratch);
        }
        let Some(split) = found else {
            nodes[slot] = Node::Leaf { counts };
            continue;
        };
        let mut n_left = 0;
        for i in 0..node_rows.len() {
            if x.get(node_rows[i], split.feature) <= split.threshold {
                node_rows.swap(i, n_left);
                n_left += 1;
            }
        }
        debug_assert!(n_left > 0 && n_left < node_rows.len());
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { counts: Vec::new() });
        nodes.push(Node::Leaf { counts: Vec::new() });
        nodes[slot] = Node::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        // Right pushed first so the left subtree is grown (and draws from
        // the rng) first.
        stack.push((right, lo + n_left, hi));
        stack.push((left, lo, lo + n_left));
    }
    Tree { nodes, n_classes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    classes: Vec<String>,
    n_features: usize,
    params: ForestParams,
}

/// Trains `n_estimators` trees, tree `i` on a bootstrap drawn with the
/// stream seeded by `mix64(seed, i)`. Trees are built in parallel; the
/// result is identical to sequential construction.
pub fn fit_forest(ds: &Dataset, params: &ForestParams) -> Result<Forest, ForestError> {
    params.validate()?;
    if ds.is_empty() {
        return Err(ForestError::Empty);
    }
    let n_classes = ds.classes.len();
    check_labels(&ds.x, &ds.y, n_classes)?;
    let n = ds.len();
    let draw = params.max_samples.unwrap_or(n);
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::seeded(rng::mix64(params.seed, i as u64));
            let rows = bootstrap_indices(&mut rng, n, draw);
            grow(&ds.x, &ds.y, n_classes, rows, params, &mut rng)
        })
        .collect();
    Ok(Forest {
        trees,
        classes: ds.classes.clone(),
        n_features: ds.n_features(),
        params: params.clone(),
    })
}

/// `size` row indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_indices(rng: &mut rng::Rng, n: usize, size: usize) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..n)).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

impl Forest {
    pub fn from_parts(
        trees: Vec<Tree>,
        classes: Vec<String>,
        n_features: usize,
        params: ForestParams,
    ) -> Result<Self, ForestError> {
        if trees.is_empty() {
            return Err(ForestError::Malformed("forest has no trees".into()));
        }
        for t in &trees {
            if t.n_classes != classes.len() {
                return Err(ForestError::Malformed("tree class count".into()));
            }
            for node in &t.nodes {
                if let Node::Internal { feature, .. } = node {
                    if *feature >= n_features {
                        return Err(ForestError::Malformed("feature index".into()));
                    }
                }
            }
        }
        Ok(Self {
            trees,
            classes,
            n_features,
            params,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Mean over trees of each tree's leaf class-frequency distribution.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::Dimension {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut p = vec![0.0; self.classes.len()];
        for tree in &self.trees {
            let counts = tree.leaf_counts(x);
            let total = f64::from(counts.iter().sum::<u32>());
            for (acc, &c) in p.iter_mut().zip(counts) {
                *acc += f64::from(c) / total;
            }
        }
        let k = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= k);
        Ok(p)
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<usize, ForestError> {
        self.predict_proba(x).map(|p| argmax(&p))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, ForestError> {
        if x.cols() != self.n_features && !x.is_empty() {
            return Err(ForestError::Dimension {
                expected: self.n_features,
                found: x.cols(),
            });
        }
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}
