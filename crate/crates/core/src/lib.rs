//! Random forest SYN flood detection toolkit.
//!
//! The pipeline mirrors a classic fine-tuning loop for flow classifiers:
//!
//! 1. [`flowdata`] loads CIC-style flow CSVs, cleans them and standard-scales
//!    the feature matrix.
//! 2. [`crossval`] builds stratified K-fold plans and evaluates a forest
//!    configuration on every fold.
//! 3. [`tuner`] sweeps the estimator/depth/feature-mode grid, keeps the most
//!    accurate configuration (prediction latency breaks ties) and trains the
//!    final model.
//! 4. [`forest`] is the CART random forest itself, with a versioned binary
//!    model format for deployment.
//!
//! [`synthgen`] produces deterministic synthetic flow data so the whole loop
//! can be exercised without the original traffic captures.

pub mod crossval;
pub mod flowdata;
pub mod forest;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod synthgen;
pub mod tuner;

pub use crossval::{CrossValConfig, CrossValReport, ScalingMode, SplitPlan};
pub use flowdata::{CleanPolicy, CleanStats, Dataset, RawTable, ScalerParams};
pub use forest::{FeatureMode, ForestHyperparams, ForestModel, ModelBundle, TreeNode};
pub use matrix::Matrix;
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use synthgen::SynthConfig;
pub use tuner::{GridSpec, TuneResult};
