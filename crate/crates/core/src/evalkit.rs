//! Confusion matrices, per-class metrics and ROC/AUC.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("length mismatch: {truth} labels vs {pred} predictions")]
    Length { truth: usize, pred: usize },
    #[error("class index {index} out of range for {k} classes")]
    ClassOutOfRange { index: usize, k: usize },
    #[error("confusion matrix is empty")]
    Empty,
    #[error("ROC needs at least one positive and one negative example")]
    SingleClass,
    #[error("score {0} is not finite")]
    NonFinite(usize),
}

/// `k x k` counts; rows are the true class, columns the predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(<[u64]>::to_vec).collect()
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::Length {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    let mut counts = vec![0u64; k * k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for index in [t, p] {
            if index >= k {
                return Err(EvalError::ClassOutOfRange { index, k });
            }
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// No row was predicted as this class; precision reported as 0.
    pub precision_undefined: bool,
    /// No row truly belongs to this class; recall reported as 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// F1 from precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn metrics(m: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = m.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let k = m.k;
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = m.get(c, c);
            let predicted: u64 = (0..k).map(|t| m.get(t, c)).sum();
            let support: u64 = (0..k).map(|p| m.get(c, p)).sum();
            let (precision, precision_undefined) = ratio(tp, predicted);
            let (recall, recall_undefined) = ratio(tp, support);
            ClassMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(Metrics {
        accuracy: m.trace() as f64 / total as f64,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
        total,
    })
}

/// Aligned text table in the usual classification-report layout.
pub fn classification_report(m: &Metrics, class_names: &[String]) -> String {
    let width = class_names
        .iter()
        .map(String::len)
        .chain(["macro avg".len()])
        .max()
        .unwrap_or(9);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>width$}  {:>9}  {:>9}  {:>9}  {:>9}",
        "", "precision", "recall", "f1-score", "support"
    );
    for (c, name) in m.per_class.iter().zip(class_names) {
        let flag = if c.precision_undefined || c.recall_undefined {
            " *"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{name:>width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9}{flag}",
            c.precision, c.recall, c.f1, c.support
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:>width$}  {:>9}  {:>9}  {:>9.4}  {:>9}",
        "accuracy", "", "", m.accuracy, m.total
    );
    let _ = writeln!(
        out,
        "{:>width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9}",
        "macro avg", m.macro_precision, m.macro_recall, m.macro_f1, m.total
    );
    if m.per_class.iter().any(|c| c.precision_undefined || c.recall_undefined) {
        let _ = writeln!(out, "* undefined ratio reported as 0");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score at or above which rows are called positive at this point;
    /// `+inf` for the origin.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// `fpr,tpr,threshold` lines with a header, for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold);
        }
        out
    }
}

/// ROC over distinct score thresholds (descending), tied scores entering
/// together; AUC by the trapezoid rule.
pub fn roc(y_true: &[bool], scores: &[f64]) -> Result<RocCurve, EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::Length {
            truth: y_true.len(),
            pred: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    let pos = y_true.iter().filter(|&&b| b).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = points.last().expect("origin present");
        let fpr = fp as f64 / neg as f64;
        let tpr = tp as f64 / pos as f64;
        auc += (fpr - prev.fpr) * (tpr + prev.tpr) / 2.0;
        points.push(RocPoint { fpr, tpr, threshold: s });
    }
    Ok(RocCurve { points, auc })
}

/// One-vs-rest ROC for each class from per-row class probabilities.
/// Classes without both positive and negative rows yield `None`.
pub fn roc_one_vs_rest(y_true: &[usize], proba: &[Vec<f64>], k: usize) -> Vec<Option<RocCurve>> {
    (0..k)
        .map(|c| {
            let truth: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
            let scores: Vec<f64> = proba.iter().map(|p| p[c]).collect();
            roc(&truth, &scores).ok()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let m = confusion(&[0, 1, 0, 1], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(m.rows(), vec![vec![2, 0], vec![0, 2]]);
        let m = confusion(&[0, 1, 0, 1], &[1, 0, 1, 0], 2).unwrap();
        assert_eq!(m.rows(), vec![vec![0, 2], vec![2, 0]]);
        assert_eq!(
            confusion(&[0], &[0, 1], 2),
            Err(EvalError::Length { truth: 1, pred: 2 })
        );
        assert_eq!(
            confusion(&[0], &[3], 2),
            Err(EvalError::ClassOutOfRange { index: 3, k: 2 })
        );
    }

    #[test]
    fn perfect_metrics() {
        let m = metrics(&confusion(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap()).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m
            .per_class
            .iter()
            .all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn f1_equals_precision_when_recall_matches() {
        assert!((f1_score(0.9444, 0.9444) - 0.9444).abs() < 1e-12);
    }

    #[test]
    fn never_predicted_class_is_flagged() {
        let m = metrics(&confusion(&[0, 1, 1], &[0, 0, 0], 2).unwrap()).unwrap();
        let c1 = &m.per_class[1];
        assert_eq!(c1.precision, 0.0);
        assert!(c1.precision_undefined);
        assert_eq!(c1.f1, 0.0);
        assert!(!c1.recall_undefined);
        let report = classification_report(&m, &["a".into(), "b".into()]);
        assert!(report.contains("accuracy"));
        assert!(report.contains('*'));
    }

    #[test]
    fn empty_matrix_is_error() {
        let m = confusion(&[], &[], 2).unwrap();
        assert_eq!(metrics(&m), Err(EvalError::Empty));
    }

    #[test]
    fn roc_edge_cases() {
        let r = roc(&[true, true, false, false], &[0.9, 0.8, 0.2, 0.1]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = roc(&[true, false, true, false], &[0.5; 4]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points.len(), 2);
        assert_eq!(roc(&[true, true], &[0.1, 0.2]), Err(EvalError::SingleClass));
        let last = r.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(r.to_csv().starts_with("fpr,tpr,threshold\n0,0,inf\n"));
    }
}
