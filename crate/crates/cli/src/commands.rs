//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synrf_core::flowdata::{self, class_counts, stratified_holdout, CleanStats, Dataset, FlowDataError};
use synrf_core::forest::{load_bundle, save_bundle, ForestError};
use synrf_core::tuner::{self, TuneError};
use synrf_core::{synthgen, ForestHyperparams, MetricsReport, ModelBundle, ScalingMode, TuneResult};

use crate::config::RunConfig;
use crate::predict::{predict_stream, PredictOptions, TimingSummary};
use crate::report::{write_error, write_json};
use crate::CliError;

/// Label written for attack rows by `synth`.
pub const SYNTH_ATTACK_LABEL: &str = "Syn";

fn data_err(e: FlowDataError) -> CliError {
    match e {
        FlowDataError::Io { .. } => CliError::Internal(e.to_string()),
        _ => CliError::Invalid(e.to_string()),
    }
}

fn tune_err(e: TuneError) -> CliError {
    match e {
        TuneError::Csv(_) => CliError::Internal(e.to_string()),
        _ => CliError::Invalid(e.to_string()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| write_error(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| write_error(path, e))
}

fn load(cfg: &RunConfig) -> Result<(Dataset, CleanStats), CliError> {
    let input = cfg.require_input()?;
    flowdata::load_clean(input, cfg.has_header, &cfg.clean_policy).map_err(data_err)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let data = synthgen::generate(&cfg.synth).map_err(|e| CliError::Invalid(e.to_string()))?;
    let path = cfg.output.clone().unwrap_or_else(|| cfg.out_path("synthetic.csv"));
    let w = create(&path)?;
    data.write_csv(w, &cfg.label_column, "BENIGN", SYNTH_ATTACK_LABEL).map_err(|e| write_error(&path, e))?;
    let [benign, attack] = data.class_counts();
    println!("wrote {} rows ({benign} benign, {attack} attack) to {}", data.n_rows(), path.display());
    Ok(())
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<(), CliError> {
    let (data, stats) = load(cfg)?;
    let path = cfg.out_path("cleaned.csv");
    let w = create(&path)?;
    data.write_csv(w, &cfg.label_column, "BENIGN", "ATTACK").map_err(|e| write_error(&path, e))?;
    write_json(&cfg.out_path("clean_stats.json"), &stats)?;
    println!(
        "kept {} of {} rows ({} non-finite, {} duplicate dropped), {} features",
        stats.rows_out,
        stats.rows_in,
        stats.nonfinite_dropped,
        stats.duplicates_dropped,
        data.n_features()
    );
    Ok(())
}

/// Cleans the input, holds out the test rows and scales per the mode.
///
/// Returns `(train, test, scaler, stats)`. Paper mode fits the scaler on
/// every cleaned row, strict mode on the training rows only.
fn split_and_scale(cfg: &RunConfig) -> Result<(Dataset, Dataset, flowdata::ScalerParams, CleanStats), CliError> {
    let (mut data, stats) = load(cfg)?;
    let (train_idx, test_idx) = stratified_holdout(&data.y, cfg.test_fraction, cfg.seed).map_err(data_err)?;
    let rows = match cfg.scaling_mode {
        ScalingMode::Paper => None,
        ScalingMode::Strict => Some(train_idx.as_slice()),
    };
    let scaler = flowdata::fit_scaler_rows(&data.x, rows).map_err(data_err)?;
    scaler.transform_in_place(&mut data.x).map_err(data_err)?;
    Ok((data.subset(&train_idx), data.subset(&test_idx), scaler, stats))
}

pub fn cmd_tune(cfg: &RunConfig) -> Result<TuneResult, CliError> {
    let (data, _) = load(cfg)?;
    let (train_idx, _) = stratified_holdout(&data.y, cfg.test_fraction, cfg.seed).map_err(data_err)?;
    let train = match cfg.scaling_mode {
        // strict mode scales inside each fold
        ScalingMode::Strict => data.subset(&train_idx),
        ScalingMode::Paper => {
            let scaler = flowdata::fit_scaler(&data.x).map_err(data_err)?;
            let x = flowdata::apply_scaler(&data.x, &scaler).map_err(data_err)?;
            Dataset { x, ..data }.subset(&train_idx)
        }
    };
    let result =
        tuner::grid_search(&train.x, &train.y, &cfg.grid, &cfg.cv(), cfg.scaling_mode, cfg.seed).map_err(tune_err)?;

    write_json(&cfg.out_path("tune_result.json"), &result)?;
    let csv_path = cfg.out_path("tune_result.csv");
    result.write_csv(create(&csv_path)?).map_err(tune_err)?;
    let folds_path = cfg.out_path("best_folds.csv");
    let best = result.per_config.iter().find(|r| r.hyperparams == result.best).expect("best comes from the grid");
    best.write_folds_csv(create(&folds_path)?).map_err(|e| write_error(&folds_path, e))?;

    let hp = &result.best;
    println!(
        "best: n_estimators={} max_depth={} feature_mode={} accuracy={} pred_time_s={:.4} (configurations tied on accuracy: {})",
        hp.n_estimators,
        hp.max_depth,
        hp.feature_mode,
        result.best_accuracy,
        result.best_pred_time,
        result.accuracy_ties.len()
    );
    Ok(result)
}

/// Contents of `train_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub hyperparams: ForestHyperparams,
    pub scaling_mode: ScalingMode,
    pub test_fraction: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub test_class_counts: [usize; 2],
    pub metrics: MetricsReport,
    pub clean_stats: CleanStats,
    pub model_path: PathBuf,
}

fn tuned_hyperparams(path: &Path) -> Result<ForestHyperparams, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Invalid(format!("cannot read tune result {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Invalid(format!("bad tune result {}: {e}", path.display())))?;
    let best = value
        .get("best")
        .ok_or_else(|| CliError::Invalid(format!("tune result {} has no 'best' entry", path.display())))?;
    ForestHyperparams::deserialize(best)
        .map_err(|e| CliError::Invalid(format!("bad 'best' entry in {}: {e}", path.display())))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport, CliError> {
    let hp = match &cfg.tune_result {
        Some(path) => tuned_hyperparams(path)?,
        None => cfg.forest(),
    };
    hp.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    let (train, test, scaler, clean_stats) = split_and_scale(cfg)?;
    let (metrics, model) = tuner::finalize(&train, &test, &hp, None).map_err(tune_err)?;

    let model_path = cfg.model.clone().unwrap_or_else(|| cfg.out_path("model.bin"));
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| write_error(dir, e))?;
    }
    let bundle = ModelBundle { model, scaler: Some(scaler), feature_names: train.feature_names.clone() };
    save_bundle(&bundle, &model_path).map_err(|e| write_error(&model_path, e))?;

    let report = TrainReport {
        hyperparams: hp,
        scaling_mode: cfg.scaling_mode,
        test_fraction: cfg.test_fraction,
        train_rows: train.n_rows(),
        test_rows: test.n_rows(),
        test_class_counts: class_counts(&test.y),
        metrics,
        clean_stats,
        model_path,
    };
    write_json(&cfg.out_path("train_report.json"), &report)?;
    let m = &report.metrics;
    println!(
        "test: accuracy={} precision={} recall={} f1={} roc_auc={} ({} rows)",
        m.accuracy, m.precision, m.recall, m.f1, m.roc_auc, report.test_rows
    );
    Ok(report)
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<TimingSummary, CliError> {
    let input = cfg.require_input()?;
    let model_path = cfg.model.clone().unwrap_or_else(|| cfg.out_path("model.bin"));
    let bundle = load_bundle(&model_path).map_err(|e| match e {
        ForestError::Io(io) => CliError::Invalid(format!("cannot read model {}: {io}", model_path.display())),
        other => CliError::Invalid(format!("{}: {other}", model_path.display())),
    })?;
    let file = File::open(input).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", input.display())))?;
    let out_path = cfg.output.clone().unwrap_or_else(|| cfg.out_path("predictions.csv"));
    let opts = PredictOptions {
        has_header: cfg.has_header,
        label_column: &cfg.label_column,
        excluded_columns: cfg.clean_policy.excluded_columns.iter().cloned().collect(),
    };
    let timing = predict_stream(&bundle, BufReader::new(file), create(&out_path)?, &opts)?;
    write_json(&cfg.out_path("timing.json"), &timing)?;
    println!(
        "scored {} rows in {:.3} s ({:.0} rows/s; {:.3} s including I/O)",
        timing.rows, timing.seconds, timing.rows_per_second, timing.wall_seconds
    );
    Ok(timing)
}
