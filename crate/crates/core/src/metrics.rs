//! Confusion-matrix metrics, rank-based ROC AUC and prediction timing.
//!
//! The positive class is attack (label 1).

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::ATTACK;
use crate::forest::{ForestError, ForestModel};
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("label vectors differ in length: {truth} true vs {other} predicted or scored")]
    LengthMismatch { truth: usize, other: usize },
    #[error("nothing to evaluate: no rows")]
    Empty,
    #[error("ROC AUC is undefined when only one class is present")]
    SingleClass,
    #[error("score at index {0} is NaN")]
    NanScore(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// Cellwise sum.
    pub fn merged(&self, other: &Self) -> Self {
        Self {
            true_pos: self.true_pos + other.true_pos,
            false_pos: self.false_pos + other.false_pos,
            false_neg: self.false_neg + other.false_neg,
            true_neg: self.true_neg + other.true_neg,
        }
    }
}

/// Markers for metrics that could not be computed as a ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateFlag {
    /// No positive predictions; precision reported as 0.
    PrecisionUndefined,
    /// No positive rows; recall reported as 0.
    RecallUndefined,
    /// Precision and recall both 0; F1 reported as 0.
    F1Undefined,
    /// Only one class in the evaluated rows; ROC AUC reported as 0.
    RocAucUndefined,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub pred_time_s: f64,
    #[serde(flatten)]
    pub matrix: ConfusionMatrix,
    pub degenerate_flags: BTreeSet<DegenerateFlag>,
}

impl MetricsReport {
    /// Full report from labels, hard predictions and attack scores.
    pub fn evaluate(y_true: &[u8], y_pred: &[u8], scores: &[f64], pred_time_s: f64) -> Result<Self, MetricsError> {
        let matrix = confusion(y_true, y_pred)?;
        let (derived, mut flags) = derive_metrics(&matrix)?;
        if scores.len() != y_true.len() {
            return Err(MetricsError::LengthMismatch { truth: y_true.len(), other: scores.len() });
        }
        let roc_auc = match roc_auc(y_true, scores) {
            Ok(auc) => auc,
            Err(MetricsError::SingleClass) => {
                flags.insert(DegenerateFlag::RocAucUndefined);
                0.0
            }
            Err(e) => return Err(e),
        };
        Ok(Self::from_parts(derived, roc_auc, pred_time_s, matrix, flags))
    }

    fn from_parts(
        d: DerivedMetrics,
        roc_auc: f64,
        pred_time_s: f64,
        matrix: ConfusionMatrix,
        degenerate_flags: BTreeSet<DegenerateFlag>,
    ) -> Self {
        Self {
            accuracy: d.accuracy,
            precision: d.precision,
            recall: d.recall,
            f1: d.f1,
            roc_auc,
            pred_time_s,
            matrix,
            degenerate_flags,
        }
    }
}

/// Counts the four cells; attack is positive.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch { truth: y_true.len(), other: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut m = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == ATTACK, p == ATTACK) {
            (true, true) => m.true_pos += 1,
            (false, true) => m.false_pos += 1,
            (true, false) => m.false_neg += 1,
            (false, false) => m.true_neg += 1,
        }
    }
    Ok(m)
}

/// Accuracy, precision, recall and F1. A zero denominator yields 0.0 and a flag.
pub fn derive_metrics(m: &ConfusionMatrix) -> Result<(DerivedMetrics, BTreeSet<DegenerateFlag>), MetricsError> {
    let total = m.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let mut flags = BTreeSet::new();
    let mut ratio = |num: u64, den: u64, flag: DegenerateFlag| {
        if den == 0 {
            flags.insert(flag);
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = (m.true_pos + m.true_neg) as f64 / total as f64;
    let precision = ratio(m.true_pos, m.true_pos + m.false_pos, DegenerateFlag::PrecisionUndefined);
    let recall = ratio(m.true_pos, m.true_pos + m.false_neg, DegenerateFlag::RecallUndefined);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        flags.insert(DegenerateFlag::F1Undefined);
        0.0
    };
    Ok((DerivedMetrics { accuracy, precision, recall, f1 }, flags))
}

/// Area under the ROC curve via the Mann-Whitney rank sum, ties at average rank.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64, MetricsError> {
    if y_true.len() != scores.len() {
        return Err(MetricsError::LengthMismatch { truth: y_true.len(), other: scores.len() });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(MetricsError::NanScore(i));
    }
    let n_pos = y_true.iter().filter(|&&y| y == ATTACK).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the positive rank sum keeps average ranks integral.
    let mut pos_rank_sum_x2: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end average to (start + 1 + end) / 2
        let avg_rank_x2 = (start + 1 + end) as u128;
        let pos_in_group = order[start..end].iter().filter(|&&i| y_true[i] == ATTACK).count() as u128;
        pos_rank_sum_x2 += avg_rank_x2 * pos_in_group;
        start = end;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    // U = R_pos - p(p+1)/2, doubled
    let u_x2 = pos_rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * q) as f64)
}

/// Predicts `x` and measures the wall-clock time of the prediction call alone.
pub fn time_predict(model: &ForestModel, x: &Matrix) -> Result<(Vec<u8>, f64), ForestError> {
    let start = Instant::now();
    let labels = model.predict(x)?;
    Ok((labels, start.elapsed().as_secs_f64()))
}

/// Like [`time_predict`] but also returns the vote-fraction scores from the
/// same pass; the clock covers the whole pass.
pub fn time_predict_scored(model: &ForestModel, x: &Matrix) -> Result<(Vec<u8>, Vec<f64>, f64), ForestError> {
    let start = Instant::now();
    let votes = model.votes(x)?;
    let elapsed = start.elapsed().as_secs_f64();
    let n = model.trees().len() as u32;
    let labels = votes.iter().map(|&v| u8::from(2 * v > n)).collect();
    let scores = votes.iter().map(|&v| f64::from(v) / f64::from(n)).collect();
    Ok((labels, scores, elapsed))
}
