//! Exhaustive hyperparameter grid search and final model training.
//!
//! Selection keeps the configuration with the highest mean cross-validated
//! accuracy; among equal accuracies the lower mean per-fold prediction time
//! wins, and a full tie keeps the earlier configuration.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossval::{cross_val_grid, stratified_kfold, CrossValConfig, CrossValError, CrossValReport, ScalingMode};
use crate::flowdata::Dataset;
use crate::forest::{fit_forest, save_model, FeatureMode, ForestError, ForestHyperparams, ForestModel};
use crate::matrix::Matrix;
use crate::metrics::{self, MetricsError, MetricsReport};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("configuration {config}: {source}")]
    Config { config: String, source: CrossValError },
    #[error(transparent)]
    CrossVal(#[from] CrossValError),
    #[error("evaluator returned {got} reports for {expected} configurations")]
    ReportCount { expected: usize, got: usize },
    #[error("train and test sets differ in width: {train} vs {test} features")]
    WidthMismatch { train: usize, test: usize },
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub estimator_options: Vec<usize>,
    pub depth_options: Vec<usize>,
    pub feature_options: Vec<FeatureMode>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            estimator_options: vec![10, 20, 50, 100],
            depth_options: vec![5, 10, 15, 20],
            feature_options: vec![FeatureMode::Sqrt, FeatureMode::Log2, FeatureMode::All],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), TuneError> {
        let bad = |m: &str| Err(TuneError::InvalidGrid(m.to_string()));
        if self.estimator_options.is_empty() || self.depth_options.is_empty() || self.feature_options.is_empty() {
            return bad("every option list needs at least one entry");
        }
        if self.estimator_options.contains(&0) {
            return bad("estimator options must be >= 1");
        }
        if self.depth_options.contains(&0) {
            return bad("depth options must be >= 1");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.estimator_options.len() * self.depth_options.len() * self.feature_options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination: estimators outermost, then depth, then feature mode.
    pub fn configs(&self, seed: u64) -> Vec<ForestHyperparams> {
        let mut out = Vec::with_capacity(self.len());
        for &n in &self.estimator_options {
            for &depth in &self.depth_options {
                for &mode in &self.feature_options {
                    out.push(ForestHyperparams::new(n, depth, mode, seed));
                }
            }
        }
        out
    }
}

/// Index of the winner under the sequential update rule, given
/// `(accuracy, pred_time)` per configuration in iteration order.
pub fn select_best(scores: &[(f64, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    let (mut best_accuracy, mut best_pred_time) = (f64::NEG_INFINITY, f64::INFINITY);
    for (i, &(accuracy, pred_time)) in scores.iter().enumerate() {
        if accuracy > best_accuracy || (accuracy == best_accuracy && pred_time < best_pred_time) {
            best = Some(i);
            best_accuracy = accuracy;
            best_pred_time = pred_time;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub scaling_mode: ScalingMode,
    pub cv: CrossValConfig,
    pub grid: GridSpec,
    /// One entry per configuration, in iteration order.
    pub per_config: Vec<CrossValReport>,
    pub best: ForestHyperparams,
    pub best_accuracy: f64,
    /// Mean per-fold prediction time of `best`, in seconds.
    pub best_pred_time: f64,
    /// Configurations sharing the best accuracy, in iteration order. When
    /// there is more than one, prediction time picked `best` among them.
    pub accuracy_ties: Vec<ForestHyperparams>,
}

impl TuneResult {
    /// Applies the selection rule to reports listed in iteration order.
    pub fn from_reports(
        grid: GridSpec,
        cv: CrossValConfig,
        scaling_mode: ScalingMode,
        per_config: Vec<CrossValReport>,
    ) -> Result<Self, TuneError> {
        let scores: Vec<(f64, f64)> = per_config.iter().map(|r| (r.mean.accuracy, r.mean.pred_time_s)).collect();
        let winner = select_best(&scores).ok_or(TuneError::ReportCount { expected: grid.len(), got: 0 })?;
        let (best_accuracy, best_pred_time) = scores[winner];
        let accuracy_ties =
            per_config.iter().filter(|r| r.mean.accuracy == best_accuracy).map(|r| r.hyperparams.clone()).collect();
        Ok(Self {
            scaling_mode,
            cv,
            grid,
            best: per_config[winner].hyperparams.clone(),
            per_config,
            best_accuracy,
            best_pred_time,
            accuracy_ties,
        })
    }

    /// `true` when prediction timing, not accuracy alone, chose `best`.
    pub fn best_depends_on_timing(&self) -> bool {
        self.accuracy_ties.len() > 1
    }

    /// One row per configuration with its mean cross-validated metrics.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TuneError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "n_estimators",
            "max_depth",
            "feature_mode",
            "accuracy",
            "f1",
            "recall",
            "roc_auc",
            "pred_time_s",
        ])?;
        for r in &self.per_config {
            let hp = &r.hyperparams;
            w.write_record([
                hp.n_estimators.to_string(),
                hp.max_depth.to_string(),
                hp.feature_mode.to_string(),
                r.mean.accuracy.to_string(),
                r.mean.f1.to_string(),
                r.mean.recall.to_string(),
                r.mean.roc_auc.to_string(),
                r.mean.pred_time_s.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Runs the grid with a caller-supplied evaluator.
///
/// `evaluate` receives every configuration in iteration order and returns
/// one report per configuration in the same order.
pub fn grid_search_with<E>(
    grid: &GridSpec,
    cv: &CrossValConfig,
    scaling_mode: ScalingMode,
    base_seed: u64,
    evaluate: E,
) -> Result<TuneResult, TuneError>
where
    E: FnOnce(&[ForestHyperparams]) -> Result<Vec<CrossValReport>, TuneError>,
{
    grid.validate()?;
    let configs = grid.configs(base_seed);
    let reports = evaluate(&configs)?;
    if reports.len() != configs.len() {
        return Err(TuneError::ReportCount { expected: configs.len(), got: reports.len() });
    }
    TuneResult::from_reports(grid.clone(), cv.clone(), scaling_mode, reports)
}

/// Cross-validates every grid configuration on `(x, y)` and selects the best.
///
/// In [`ScalingMode::Paper`] `x` must already be scaled.
pub fn grid_search(
    x: &Matrix,
    y: &[u8],
    grid: &GridSpec,
    cv: &CrossValConfig,
    scaling_mode: ScalingMode,
    base_seed: u64,
) -> Result<TuneResult, TuneError> {
    let plan = stratified_kfold(y, cv)?;
    grid_search_with(grid, cv, scaling_mode, base_seed, |configs| {
        cross_val_grid(configs, x, y, &plan, scaling_mode).map_err(|e| annotate(e, configs))
    })
}

fn annotate(err: CrossValError, configs: &[ForestHyperparams]) -> TuneError {
    match err {
        CrossValError::InConfig { index, source } => {
            TuneError::Config { config: describe(&configs[index]), source: *source }
        }
        other => TuneError::CrossVal(other),
    }
}

fn describe(hp: &ForestHyperparams) -> String {
    format!("n_estimators={} max_depth={} feature_mode={}", hp.n_estimators, hp.max_depth, hp.feature_mode)
}

/// Trains `best` on every training row, evaluates once on `test` and, when
/// `model_path` is given, saves the model there.
pub fn finalize(
    train: &Dataset,
    test: &Dataset,
    best: &ForestHyperparams,
    model_path: Option<&Path>,
) -> Result<(MetricsReport, ForestModel), TuneError> {
    if train.n_features() != test.n_features() {
        return Err(TuneError::WidthMismatch { train: train.n_features(), test: test.n_features() });
    }
    let model = fit_forest(&train.x, &train.y, best)?;
    let (pred, scores, seconds) = metrics::time_predict_scored(&model, &test.x)?;
    let report = MetricsReport::evaluate(&test.y, &pred, &scores, seconds)?;
    if let Some(path) = model_path {
        save_model(&model, path)?;
    }
    Ok((report, model))
}
