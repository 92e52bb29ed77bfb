//! Run configuration: JSON file values overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use synrf_core::flowdata::{CleanPolicy, DEFAULT_LABEL_COLUMN};
use synrf_core::{CrossValConfig, FeatureMode, ForestHyperparams, GridSpec, ScalingMode, SynthConfig};

use crate::CliError;

/// Flags shared by every subcommand. Each overrides the matching config
/// file entry.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// JSON run configuration; flags take precedence over its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Input CSV
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Directory for every file the command writes
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    pub label_column: Option<String>,
    /// Seeds the holdout split, the fold assignment and the forests
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where the standard scaler is fitted
    #[arg(long, value_name = "paper|strict")]
    pub scaling_mode: Option<ScalingMode>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    pub threads: Option<usize>,
    /// The input CSV has no header row
    #[arg(long)]
    pub no_header: bool,
}

/// Forest flags used by `train`.
#[derive(Args, Clone, Debug, Default)]
pub struct ForestArgs {
    #[arg(long)]
    pub n_estimators: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, value_name = "sqrt|log2|all")]
    pub feature_mode: Option<FeatureMode>,
}

/// Grid and fold flags used by `tune`.
#[derive(Args, Clone, Debug, Default)]
pub struct GridArgs {
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_delimiter = ',', value_name = "N,..")]
    pub grid_estimators: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_name = "D,..")]
    pub grid_depths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_name = "MODE,..")]
    pub grid_features: Option<Vec<FeatureMode>>,
}

/// Flags of `synth`.
#[derive(Args, Clone, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub attack_fraction: Option<f64>,
    #[arg(long)]
    pub features: Option<usize>,
    /// Per-feature mean shift of attack rows
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
}

/// Everything a command may need, after merging file and flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub label_column: String,
    pub has_header: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub scaling_mode: ScalingMode,
    /// Share of rows held out for the final evaluation.
    pub test_fraction: f64,
    pub folds: usize,
    pub grid: GridSpec,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub feature_mode: FeatureMode,
    pub clean_policy: CleanPolicy,
    /// Synthetic data shape; its seed is replaced by `seed`.
    pub synth: SynthConfig,
    pub model: Option<PathBuf>,
    pub tune_result: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let forest = ForestHyperparams::default();
        Self {
            input: None,
            output_dir: PathBuf::from("."),
            label_column: DEFAULT_LABEL_COLUMN.to_owned(),
            has_header: true,
            seed: 42,
            threads: None,
            scaling_mode: ScalingMode::Paper,
            test_fraction: 0.2,
            folds: CrossValConfig::default().n_splits,
            grid: GridSpec::default(),
            n_estimators: forest.n_estimators,
            max_depth: forest.max_depth,
            feature_mode: forest.feature_mode,
            clean_policy: CleanPolicy::default(),
            synth: SynthConfig::default(),
            model: None,
            tune_result: None,
            output: None,
        }
    }
}

impl RunConfig {
    /// Reads the config file named by `--config`, if any, then applies flags.
    pub fn load(common: &CommonArgs) -> Result<Self, CliError> {
        let mut cfg = match &common.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        cfg.apply_common(common);
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("bad config {}: {e}", path.display())))
    }

    fn apply_common(&mut self, a: &CommonArgs) {
        if let Some(v) = &a.input {
            self.input = Some(v.clone());
        }
        if let Some(v) = &a.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = &a.label_column {
            self.label_column = v.clone();
        }
        if let Some(v) = a.seed {
            self.seed = v;
        }
        if let Some(v) = a.scaling_mode {
            self.scaling_mode = v;
        }
        if a.threads.is_some() {
            self.threads = a.threads;
        }
        if a.no_header {
            self.has_header = false;
        }
        // the top-level label column wins over the policy's own
        self.clean_policy.label_column = self.label_column.clone();
        self.synth.seed = self.seed;
    }

    pub fn apply_forest(&mut self, a: &ForestArgs) {
        if let Some(v) = a.n_estimators {
            self.n_estimators = v;
        }
        if let Some(v) = a.max_depth {
            self.max_depth = v;
        }
        if let Some(v) = a.feature_mode {
            self.feature_mode = v;
        }
    }

    pub fn apply_grid(&mut self, a: &GridArgs) {
        if let Some(v) = a.folds {
            self.folds = v;
        }
        if let Some(v) = &a.grid_estimators {
            self.grid.estimator_options = v.clone();
        }
        if let Some(v) = &a.grid_depths {
            self.grid.depth_options = v.clone();
        }
        if let Some(v) = &a.grid_features {
            self.grid.feature_options = v.clone();
        }
    }

    pub fn apply_synth(&mut self, a: &SynthArgs) {
        if let Some(v) = a.rows {
            self.synth.n_rows = v;
        }
        if let Some(v) = a.attack_fraction {
            self.synth.attack_fraction = v;
        }
        if let Some(v) = a.features {
            self.synth.n_features = v;
        }
        if let Some(v) = a.separation {
            self.synth.class_separation = v;
        }
        if let Some(v) = a.noise_std {
            self.synth.noise_std = v;
        }
    }

    pub fn cv(&self) -> CrossValConfig {
        CrossValConfig { n_splits: self.folds, shuffle: true, random_state: self.seed }
    }

    pub fn forest(&self) -> ForestHyperparams {
        ForestHyperparams::new(self.n_estimators, self.max_depth, self.feature_mode, self.seed)
    }

    pub fn require_input(&self) -> Result<&Path, CliError> {
        let path = self.input.as_deref().ok_or_else(|| CliError::Invalid("--input is required".into()))?;
        if !path.is_file() {
            return Err(CliError::Invalid(format!("input file {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
