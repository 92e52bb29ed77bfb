//! Stratified K-fold plans and per-fold forest evaluation.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{apply_scaler, fit_scaler_rows, FlowDataError, ATTACK, BENIGN};
use crate::forest::{fit_forest_rows, fit_trees, ForestError, ForestHyperparams, ForestModel, PresortedMatrix};
use crate::matrix::Matrix;
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum CrossValError {
    #[error("n_splits must be at least 2, got {0}")]
    TooFewSplits(usize),
    #[error("class {class} has {count} rows, fewer than n_splits = {n_splits}")]
    ClassTooSmall { class: u8, count: usize, n_splits: usize },
    #[error("split plan covers {plan} rows but the data has {data}")]
    PlanMismatch { plan: usize, data: usize },
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: ForestError },
    #[error("fold {fold}: {source}")]
    FoldMetrics { fold: usize, source: MetricsError },
    #[error("fold {fold}: {source}")]
    FoldScaling { fold: usize, source: FlowDataError },
    #[error("unknown scaling mode {0:?} (expected paper or strict)")]
    UnknownScalingMode(String),
    #[error("configuration {index}: {source}")]
    InConfig { index: usize, source: Box<CrossValError> },
    #[error("no configurations to evaluate")]
    NoConfigs,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossValConfig {
    pub n_splits: usize,
    pub shuffle: bool,
    pub random_state: u64,
}

impl Default for CrossValConfig {
    fn default() -> Self {
        Self { n_splits: 5, shuffle: true, random_state: 42 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    pub fn n_rows(&self) -> usize {
        self.folds.iter().map(|f| f.test.len()).sum()
    }
}

/// Builds a stratified K-fold plan.
///
/// Each class's indices are shuffled (when `cfg.shuffle`) and dealt into
/// `n_splits` contiguous groups; the first `count % n_splits` groups hold one
/// extra row. Fold `k` tests on group `k` of every class. Index lists are
/// sorted.
pub fn stratified_kfold(y: &[u8], cfg: &CrossValConfig) -> Result<SplitPlan, CrossValError> {
    let k = cfg.n_splits;
    if k < 2 {
        return Err(CrossValError::TooFewSplits(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.random_state);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [BENIGN, ATTACK] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        let count = members.len();
        if count < k {
            return Err(CrossValError::ClassTooSmall { class, count, n_splits: k });
        }
        if cfg.shuffle {
            members.shuffle(&mut rng);
        }
        let (base, extra) = (count / k, count % k);
        let mut start = 0;
        for (fold, test) in tests.iter_mut().enumerate() {
            let size = base + usize::from(fold < extra);
            test.extend_from_slice(&members[start..start + size]);
            start += size;
        }
    }
    let folds = tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; y.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train = (0..y.len()).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect();
    Ok(SplitPlan { folds })
}

/// Where the standard scaler is fitted during cross-validation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMode {
    /// The caller scales all rows before splitting; folds use the data as given.
    #[default]
    Paper,
    /// Each fold fits the scaler on its training rows and applies it to both sides.
    Strict,
}

impl fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingMode::Paper => "paper",
            ScalingMode::Strict => "strict",
        })
    }
}

impl FromStr for ScalingMode {
    type Err = CrossValError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(ScalingMode::Paper),
            "strict" => Ok(ScalingMode::Strict),
            _ => Err(CrossValError::UnknownScalingMode(s.to_string())),
        }
    }
}

/// Cross-validated metrics of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub hyperparams: ForestHyperparams,
    pub scaling_mode: ScalingMode,
    /// One report per fold, in fold order.
    pub folds: Vec<MetricsReport>,
    /// Arithmetic mean of every per-fold scalar (prediction time included);
    /// the confusion matrix is the cellwise sum over folds.
    pub mean: MetricsReport,
    /// Metrics of the summed confusion matrix, ROC AUC over all out-of-fold
    /// scores, and the total prediction time.
    pub pooled: MetricsReport,
}

impl CrossValReport {
    fn assemble(
        hyperparams: ForestHyperparams,
        scaling_mode: ScalingMode,
        folds: Vec<MetricsReport>,
        oof: &OutOfFold,
    ) -> Result<Self, MetricsError> {
        let k = folds.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| folds.iter().map(f).sum::<f64>() / k;
        let matrix = folds.iter().fold(Default::default(), |acc: metrics::ConfusionMatrix, r| acc.merged(&r.matrix));
        let total_time: f64 = folds.iter().map(|r| r.pred_time_s).sum();
        let mean = MetricsReport {
            accuracy: avg(|r| r.accuracy),
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            f1: avg(|r| r.f1),
            roc_auc: avg(|r| r.roc_auc),
            pred_time_s: avg(|r| r.pred_time_s),
            matrix,
            degenerate_flags: folds.iter().flat_map(|r| r.degenerate_flags.iter().copied()).collect(),
        };
        let pooled = MetricsReport::evaluate(&oof.y, &oof.pred, &oof.scores, total_time)?;
        Ok(Self { hyperparams, scaling_mode, folds, mean, pooled })
    }

    /// Writes one CSV row per fold.
    pub fn write_folds_csv<W: Write>(&self, writer: W) -> Result<(), CrossValError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "fold",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "roc_auc",
            "pred_time_s",
            "tp",
            "fp",
            "fn",
            "tn",
        ])?;
        for (i, r) in self.folds.iter().enumerate() {
            let m = &r.matrix;
            w.write_record([
                i.to_string(),
                r.accuracy.to_string(),
                r.precision.to_string(),
                r.recall.to_string(),
                r.f1.to_string(),
                r.roc_auc.to_string(),
                r.pred_time_s.to_string(),
                m.true_pos.to_string(),
                m.false_pos.to_string(),
                m.false_neg.to_string(),
                m.true_neg.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Out-of-fold labels, predictions and scores accumulated across folds.
#[derive(Default)]
struct OutOfFold {
    y: Vec<u8>,
    pred: Vec<u8>,
    scores: Vec<f64>,
}

/// Training and test data of one fold, scaled per the scaling mode.
struct FoldData {
    train: PresortedMatrix,
    train_y: Vec<u8>,
    all_train_rows: Vec<usize>,
    test_x: Matrix,
    test_y: Vec<u8>,
}

impl FoldData {
    fn new(x: &Matrix, y: &[u8], fold_idx: usize, fold: &Fold, mode: ScalingMode) -> Result<Self, CrossValError> {
        let mut train_x = x.select_rows(&fold.train);
        let mut test_x = x.select_rows(&fold.test);
        if mode == ScalingMode::Strict {
            let scaling = |source| CrossValError::FoldScaling { fold: fold_idx, source };
            let scaler = fit_scaler_rows(x, Some(&fold.train)).map_err(scaling)?;
            train_x = apply_scaler(&train_x, &scaler).map_err(scaling)?;
            test_x = apply_scaler(&test_x, &scaler).map_err(scaling)?;
        }
        let train = PresortedMatrix::new(&train_x).map_err(|source| CrossValError::Fold { fold: fold_idx, source })?;
        Ok(Self {
            train,
            train_y: fold.train.iter().map(|&i| y[i]).collect(),
            all_train_rows: (0..fold.train.len()).collect(),
            test_x,
            test_y: fold.test.iter().map(|&i| y[i]).collect(),
        })
    }

    /// Times prediction of the test side and records the fold's report.
    fn evaluate(&self, fold: usize, model: &ForestModel, oof: &mut OutOfFold) -> Result<MetricsReport, CrossValError> {
        let (pred, scores, seconds) =
            metrics::time_predict_scored(model, &self.test_x).map_err(|source| CrossValError::Fold { fold, source })?;
        let report = MetricsReport::evaluate(&self.test_y, &pred, &scores, seconds)
            .map_err(|source| CrossValError::FoldMetrics { fold, source })?;
        oof.y.extend_from_slice(&self.test_y);
        oof.pred.extend(pred);
        oof.scores.extend(scores);
        Ok(report)
    }
}

/// Hyperparameters of fold `fold`: the forest seed is derived from
/// `(hp.seed, fold)`.
pub fn fold_hyperparams(hp: &ForestHyperparams, fold: usize) -> ForestHyperparams {
    ForestHyperparams { seed: derive_seed(hp.seed, fold as u64), ..hp.clone() }
}

fn check_plan(y: &[u8], plan: &SplitPlan) -> Result<(), CrossValError> {
    let covered = plan.n_rows();
    if covered != y.len() || plan.folds.iter().any(|f| f.train.len() + f.test.len() != y.len()) {
        return Err(CrossValError::PlanMismatch { plan: covered, data: y.len() });
    }
    Ok(())
}

/// Trains `hp` on every fold's training rows and evaluates it on the fold's
/// test rows.
///
/// In [`ScalingMode::Paper`] `x` must already be scaled; in
/// [`ScalingMode::Strict`] it is raw and each fold fits its own scaler.
pub fn cross_val_model(
    hp: &ForestHyperparams,
    x: &Matrix,
    y: &[u8],
    plan: &SplitPlan,
    mode: ScalingMode,
) -> Result<CrossValReport, CrossValError> {
    match cross_val_grid(std::slice::from_ref(hp), x, y, plan, mode) {
        Ok(mut reports) => Ok(reports.remove(0)),
        Err(CrossValError::InConfig { source, .. }) => Err(*source),
        Err(e) => Err(e),
    }
}

/// [`cross_val_model`] for many configurations at once, returned in input
/// order.
///
/// Configurations that differ only in `n_estimators` and `max_depth` share
/// trees: per fold, the largest forest of each group is grown once to the
/// group's deepest `max_depth`, and every member takes a prefix of it with
/// each tree cut at its own depth. The resulting models are identical to
/// training each configuration on its own. Predictions are timed one
/// configuration at a time.
pub fn cross_val_grid(
    configs: &[ForestHyperparams],
    x: &Matrix,
    y: &[u8],
    plan: &SplitPlan,
    mode: ScalingMode,
) -> Result<Vec<CrossValReport>, CrossValError> {
    if configs.is_empty() {
        return Err(CrossValError::NoConfigs);
    }
    check_plan(y, plan)?;
    for hp in configs {
        hp.validate().map_err(|source| CrossValError::Fold { fold: 0, source })?;
    }

    // groups of configurations whose trees coincide, in first-seen order
    let mut groups: Vec<(ForestHyperparams, Vec<usize>)> = Vec::new();
    for (i, hp) in configs.iter().enumerate() {
        let same = |g: &ForestHyperparams| {
            g.seed == hp.seed && g.feature_mode == hp.feature_mode && g.min_samples_split == hp.min_samples_split
        };
        match groups.iter_mut().find(|(g, _)| same(g)) {
            Some((g, members)) => {
                g.n_estimators = g.n_estimators.max(hp.n_estimators);
                g.max_depth = g.max_depth.max(hp.max_depth);
                members.push(i);
            }
            None => groups.push((hp.clone(), vec![i])),
        }
    }

    let mut per_fold: Vec<Vec<MetricsReport>> = vec![Vec::with_capacity(plan.folds.len()); configs.len()];
    let mut oof: Vec<OutOfFold> = configs.iter().map(|_| OutOfFold::default()).collect();
    let in_config = |index: usize| move |e: CrossValError| CrossValError::InConfig { index, source: Box::new(e) };
    for (k, fold) in plan.folds.iter().enumerate() {
        let data = FoldData::new(x, y, k, fold, mode)?;
        let n_cols = data.train.n_cols();
        for (group, members) in &groups {
            let grow = fold_hyperparams(group, k);
            let to_fold_err = |source| CrossValError::Fold { fold: k, source };
            let grown = if members.len() == 1 {
                None
            } else {
                let trees = fit_trees(&data.train, &data.train_y, &data.all_train_rows, &grow, grow.n_estimators);
                Some(trees.map_err(to_fold_err).map_err(in_config(members[0]))?)
            };
            for &i in members {
                let hp = fold_hyperparams(&configs[i], k);
                let model = match &grown {
                    Some(trees) => ForestModel::from_grown(trees, &hp, n_cols),
                    None => fit_forest_rows(&data.train, &data.train_y, &data.all_train_rows, &hp),
                }
                .map_err(to_fold_err)
                .map_err(in_config(i))?;
                let report = data.evaluate(k, &model, &mut oof[i]).map_err(in_config(i))?;
                per_fold[i].push(report);
            }
        }
    }

    configs
        .iter()
        .zip(per_fold)
        .zip(&oof)
        .enumerate()
        .map(|(i, ((hp, folds), oof))| {
            CrossValReport::assemble(hp.clone(), mode, folds, oof)
                .map_err(|source| in_config(i)(CrossValError::FoldMetrics { fold: plan.folds.len(), source }))
        })
        .collect()
}
