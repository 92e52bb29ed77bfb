//! Bootstrap-aggregated CART random forest for binary flow classification.

mod format;
mod tree;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{
    decode_bundle, encode_bundle, load_bundle, load_model, save_bundle, save_model, ModelBundle, MODEL_MAGIC,
    MODEL_VERSION,
};
pub use tree::{best_split, gini, grow_tree, leaf_class, midpoint, DecisionTree, PresortedMatrix, Split, TreeNode};

use crate::flowdata::class_counts;
use crate::matrix::Matrix;
use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("gini of an empty node is undefined")]
    EmptyNode,
    #[error("candidate feature set is empty")]
    NoCandidateFeatures,
    #[error("training sample is empty")]
    EmptySample,
    #[error("training labels contain a single class; both benign and attack rows are required")]
    SingleClass,
    #[error("label vector has {labels} entries for {rows} rows")]
    LabelLength { rows: usize, labels: usize },
    #[error("row index {row} out of range for {n_rows} rows")]
    RowOutOfRange { row: usize, n_rows: usize },
    #[error("too many rows for the tree builder: {0}")]
    TooManyRows(usize),
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("input has {found} feature columns, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("not a model file")]
    NotAModel,
    #[error("unsupported model format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("model file is truncated")]
    Truncated,
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
    #[error("model I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Size rule for the random candidate-feature subset drawn at each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Sqrt,
    Log2,
    /// Every feature at every split (scikit-learn's `max_features=None`).
    All,
}

impl FeatureMode {
    pub fn n_candidates(self, n_features: usize) -> usize {
        match self {
            FeatureMode::Sqrt => n_features.isqrt().max(1),
            FeatureMode::Log2 => n_features.checked_ilog2().unwrap_or(0).max(1) as usize,
            FeatureMode::All => n_features,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Sqrt => "sqrt",
            FeatureMode::Log2 => "log2",
            FeatureMode::All => "all",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sqrt" => Ok(FeatureMode::Sqrt),
            "log2" => Ok(FeatureMode::Log2),
            "all" | "none" => Ok(FeatureMode::All),
            other => Err(format!("unknown feature mode '{other}' (expected sqrt, log2 or all)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestHyperparams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    pub min_samples_split: usize,
}

impl Default for ForestHyperparams {
    /// The 20-tree, depth-10, all-features configuration.
    fn default() -> Self {
        Self { n_estimators: 20, max_depth: 10, feature_mode: FeatureMode::All, seed: 42, min_samples_split: 2 }
    }
}

impl ForestHyperparams {
    pub fn new(n_estimators: usize, max_depth: usize, feature_mode: FeatureMode, seed: u64) -> Self {
        Self { n_estimators, max_depth, feature_mode, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_estimators == 0 {
            return Err(ForestError::InvalidHyperparams("n_estimators must be >= 1".into()));
        }
        if self.max_depth == 0 {
            return Err(ForestError::InvalidHyperparams("max_depth must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ForestError::InvalidHyperparams("min_samples_split must be >= 2".into()));
        }
        if self.n_estimators > u32::MAX as usize || self.max_depth > u32::MAX as usize {
            return Err(ForestError::InvalidHyperparams("value exceeds u32 range".into()));
        }
        Ok(())
    }
}

/// A trained forest. Immutable; prediction is safe from many threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<DecisionTree>,
    hyperparams: ForestHyperparams,
    n_features_trained: usize,
}

impl ForestModel {
    pub(crate) fn from_parts(
        trees: Vec<DecisionTree>,
        hyperparams: ForestHyperparams,
        n_features_trained: usize,
    ) -> Result<Self, ForestError> {
        hyperparams.validate()?;
        if trees.len() != hyperparams.n_estimators {
            return Err(ForestError::Corrupt(format!(
                "{} trees for n_estimators = {}",
                trees.len(),
                hyperparams.n_estimators
            )));
        }
        Ok(Self { trees, hyperparams, n_features_trained })
    }

    /// The forest `hp` would train, assembled from trees grown by
    /// [`fit_trees`] with the same seed, feature mode and `min_samples_split`
    /// and a `max_depth` of at least `hp.max_depth`: the first
    /// `hp.n_estimators` trees, each cut at `hp.max_depth`.
    pub fn from_grown(grown: &[DecisionTree], hp: &ForestHyperparams, n_features: usize) -> Result<Self, ForestError> {
        if grown.len() < hp.n_estimators {
            return Err(ForestError::InvalidHyperparams(format!(
                "{} grown trees cannot supply n_estimators = {}",
                grown.len(),
                hp.n_estimators
            )));
        }
        let trees = grown[..hp.n_estimators].iter().map(|t| t.truncated(hp.max_depth)).collect();
        Self::from_parts(trees, hp.clone(), n_features)
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn hyperparams(&self) -> &ForestHyperparams {
        &self.hyperparams
    }

    pub fn n_features_trained(&self) -> usize {
        self.n_features_trained
    }

    fn check_dims(&self, x: &Matrix) -> Result<(), ForestError> {
        if x.n_cols() != self.n_features_trained {
            return Err(ForestError::DimensionMismatch { expected: self.n_features_trained, found: x.n_cols() });
        }
        Ok(())
    }

    /// Number of trees voting attack, per row.
    pub fn votes(&self, x: &Matrix) -> Result<Vec<u32>, ForestError> {
        self.check_dims(x)?;
        const BLOCK: usize = 4096;
        let mut out = vec![0u32; x.n_rows()];
        out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
            let start = b * BLOCK;
            for (k, slot) in chunk.iter_mut().enumerate() {
                let row = x.row(start + k);
                *slot = self.trees.iter().map(|t| u32::from(t.predict_row(row))).sum();
            }
        });
        Ok(out)
    }

    /// Majority vote per row; an even split goes to benign.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>, ForestError> {
        let n = self.trees.len() as u32;
        Ok(self.votes(x)?.into_iter().map(|v| u8::from(2 * v > n)).collect())
    }

    /// Fraction of trees voting attack, per row.
    pub fn predict_score(&self, x: &Matrix) -> Result<Vec<f64>, ForestError> {
        let n = self.trees.len() as f64;
        Ok(self.votes(x)?.into_iter().map(|v| v as f64 / n).collect())
    }
}

/// Draws the bootstrap multiplicities of tree `t` over `rows`.
fn bootstrap_weights<R: Rng>(rng: &mut R, rows: &[usize], n_total: usize) -> Vec<u32> {
    let mut weights = vec![0u32; n_total];
    for _ in 0..rows.len() {
        weights[rows[rng.random_range(0..rows.len())]] += 1;
    }
    weights
}

/// Trains a forest on the rows of `data` listed in `rows`.
///
/// Tree `t` uses RNG stream `t` of `hp.seed` for both its bootstrap sample
/// and its feature draws, so the model does not depend on how many threads
/// build it. Training on a row subset gives the same model as training on
/// the extracted submatrix.
pub fn fit_forest_rows(
    data: &PresortedMatrix,
    y: &[u8],
    rows: &[usize],
    hp: &ForestHyperparams,
) -> Result<ForestModel, ForestError> {
    let trees = fit_trees(data, y, rows, hp, hp.n_estimators)?;
    ForestModel::from_parts(trees, hp.clone(), data.n_cols())
}

/// Grows trees `0..count` of the forest `hp` describes, ignoring
/// `hp.n_estimators`.
///
/// Tree `t` does not depend on how many trees the forest has, and a tree
/// grown to a larger `max_depth` cut back with
/// [`DecisionTree::truncated`] equals the shallower tree; see
/// [`ForestModel::from_grown`].
pub fn fit_trees(
    data: &PresortedMatrix,
    y: &[u8],
    rows: &[usize],
    hp: &ForestHyperparams,
    count: usize,
) -> Result<Vec<DecisionTree>, ForestError> {
    hp.validate()?;
    if y.len() != data.n_rows() {
        return Err(ForestError::LabelLength { rows: data.n_rows(), labels: y.len() });
    }
    if rows.is_empty() {
        return Err(ForestError::EmptySample);
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= data.n_rows()) {
        return Err(ForestError::RowOutOfRange { row: r, n_rows: data.n_rows() });
    }
    let sample_labels: Vec<u8> = rows.iter().map(|&r| y[r]).collect();
    let counts = class_counts(&sample_labels);
    if counts[0] == 0 || counts[1] == 0 {
        return Err(ForestError::SingleClass);
    }
    Ok((0..count)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(hp.seed, t as u64);
            let weights = bootstrap_weights(&mut rng, rows, data.n_rows());
            tree::grow_weighted(data, y, &weights, hp, &mut rng)
        })
        .collect())
}

/// Trains a forest on every row of `x`.
pub fn fit_forest(x: &Matrix, y: &[u8], hp: &ForestHyperparams) -> Result<ForestModel, ForestError> {
    hp.validate()?;
    if y.len() != x.n_rows() {
        return Err(ForestError::LabelLength { rows: x.n_rows(), labels: y.len() });
    }
    let data = PresortedMatrix::new(x)?;
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    fit_forest_rows(&data, y, &rows, hp)
}
