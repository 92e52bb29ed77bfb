//! Deterministic synthetic flow datasets.
//!
//! Every feature is Gaussian with standard deviation `noise_std`. Benign rows
//! are centred at zero; attack rows are shifted by `class_separation` along a
//! per-feature sign drawn once from the seed, so each feature on its own
//! separates the classes by `class_separation / noise_std` standard
//! deviations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{Dataset, ATTACK, BENIGN};
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("n_rows must be at least 2, got {0}")]
    TooFewRows(usize),
    #[error("attack_fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("{n_rows} rows at attack_fraction {fraction} leave a class empty")]
    EmptyClass { n_rows: usize, fraction: f64 },
    #[error("n_features must be positive")]
    NoFeatures,
    #[error("class_separation must be finite and >= 0, got {0}")]
    BadSeparation(f64),
    #[error("noise_std must be finite and > 0, got {0}")]
    BadNoise(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub attack_fraction: f64,
    pub n_features: usize,
    pub class_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_rows: 10_000, attack_fraction: 0.5, n_features: 82, class_separation: 4.0, noise_std: 1.0, seed: 42 }
    }
}

impl SynthConfig {
    pub fn n_attack(&self) -> usize {
        (self.n_rows as f64 * self.attack_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_rows < 2 {
            return Err(SynthError::TooFewRows(self.n_rows));
        }
        if !(self.attack_fraction > 0.0 && self.attack_fraction < 1.0) {
            return Err(SynthError::BadFraction(self.attack_fraction));
        }
        let n_attack = self.n_attack();
        if n_attack == 0 || n_attack == self.n_rows {
            return Err(SynthError::EmptyClass { n_rows: self.n_rows, fraction: self.attack_fraction });
        }
        if self.n_features == 0 {
            return Err(SynthError::NoFeatures);
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return Err(SynthError::BadSeparation(self.class_separation));
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err(SynthError::BadNoise(self.noise_std));
        }
        Ok(())
    }
}

pub fn feature_name(j: usize) -> String {
    format!("feature_{j:03}")
}

/// Generates the dataset described by `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let directions: Vec<f64> = (0..cfg.n_features).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();

    let n_attack = cfg.n_attack();
    let mut y = vec![BENIGN; cfg.n_rows - n_attack];
    y.resize(cfg.n_rows, ATTACK);
    y.shuffle(&mut rng);

    let noise = Normal::new(0.0, cfg.noise_std).expect("validated noise_std");
    let mut data = Vec::with_capacity(cfg.n_rows * cfg.n_features);
    for &label in &y {
        let shift = if label == ATTACK { cfg.class_separation } else { 0.0 };
        data.extend(directions.iter().map(|dir| shift * dir + noise.sample(&mut rng)));
    }
    let x = Matrix::new(cfg.n_rows, cfg.n_features, data).expect("shape by construction");
    let names = (0..cfg.n_features).map(feature_name).collect();
    Ok(Dataset::new(x, y, names).expect("finite by construction"))
}
