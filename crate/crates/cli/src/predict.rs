//! Block-wise batch prediction over CSV input.

use std::io::{Read, Write};
use std::time::Instant;

use csv::StringRecord;
use serde::{Deserialize, Serialize};
use synrf_core::{Matrix, ModelBundle};

use crate::CliError;

/// Rows parsed, scaled and scored per block.
pub const BLOCK_ROWS: usize = 65_536;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub rows: usize,
    /// Time spent inside the model's prediction calls.
    pub seconds: f64,
    /// `rows / seconds`.
    pub rows_per_second: f64,
    /// Whole pass including CSV parsing, scaling and writing.
    pub wall_seconds: f64,
}

/// How input columns map onto model features.
#[derive(Clone, Debug, PartialEq)]
pub struct InputColumns {
    pub indices: Vec<usize>,
    pub names: Vec<String>,
}

/// Chooses the feature columns of an input file.
///
/// With a header that names every feature the model was trained on, columns
/// are taken by name in training order. Otherwise every column except the
/// label and the excluded identifier columns is used, in file order, and the
/// count must equal the model's feature count.
pub fn input_columns(
    header: &[String],
    has_header: bool,
    bundle: &ModelBundle,
    label_column: &str,
    excluded: &[String],
) -> Result<InputColumns, CliError> {
    let expected = bundle.model.n_features_trained();
    let find = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name.trim()));
    if has_header && bundle.feature_names.len() == expected {
        if let Some(indices) = bundle.feature_names.iter().map(|n| find(n)).collect::<Option<Vec<_>>>() {
            let names = indices.iter().map(|&j| header[j].trim().to_owned()).collect();
            return Ok(InputColumns { indices, names });
        }
    }
    let skip = |name: &str| {
        has_header
            && (name.trim().eq_ignore_ascii_case(label_column.trim())
                || excluded.iter().any(|e| e.trim().eq_ignore_ascii_case(name.trim())))
    };
    let indices: Vec<usize> = (0..header.len()).filter(|&j| !skip(&header[j])).collect();
    if indices.len() != expected {
        return Err(CliError::Invalid(format!(
            "input has {} feature columns, model expects {expected}",
            indices.len()
        )));
    }
    let names = indices.iter().map(|&j| header[j].trim().to_owned()).collect();
    Ok(InputColumns { indices, names })
}

/// Options for [`predict_stream`].
pub struct PredictOptions<'a> {
    pub has_header: bool,
    pub label_column: &'a str,
    pub excluded_columns: Vec<String>,
}

/// Scores every row of `input` and writes `label,score` lines to `output`.
///
/// Labels are 0 (benign) or 1 (attack); the score is the fraction of trees
/// voting attack. The model's stored scaler is applied first.
pub fn predict_stream<R: Read, W: Write>(
    bundle: &ModelBundle,
    input: R,
    mut output: W,
    opts: &PredictOptions<'_>,
) -> Result<TimingSummary, CliError> {
    let wall = Instant::now();
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(input);
    let mut record = StringRecord::new();
    let bad_csv = |e: csv::Error| CliError::Invalid(format!("malformed CSV input: {e}"));
    if !reader.read_record(&mut record).map_err(bad_csv)? {
        return Err(CliError::Invalid("input has no rows".into()));
    }
    let width = record.len();
    let header: Vec<String> = if opts.has_header {
        record.iter().map(str::to_owned).collect()
    } else {
        (0..width).map(|j| format!("col_{j}")).collect()
    };
    let columns = input_columns(&header, opts.has_header, bundle, opts.label_column, &opts.excluded_columns)?;
    let n_features = columns.indices.len();
    let n_trees = bundle.model.trees().len() as f64;

    let write_err = |e: std::io::Error| CliError::Internal(format!("cannot write predictions: {e}"));
    writeln!(output, "label,score").map_err(write_err)?;

    let mut pending = !opts.has_header;
    let mut block: Vec<f64> = Vec::with_capacity(BLOCK_ROWS * n_features);
    let (mut rows, mut seconds) = (0usize, 0.0f64);
    loop {
        let more = pending || reader.read_record(&mut record).map_err(bad_csv)?;
        pending = false;
        if more {
            if record.len() != width {
                return Err(CliError::Invalid(format!(
                    "row {} has {} cells, expected {width}",
                    rows + block.len() / n_features.max(1),
                    record.len()
                )));
            }
            for (&j, name) in columns.indices.iter().zip(&columns.names) {
                let cell = &record[j];
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => block.push(v),
                    _ => {
                        return Err(CliError::Invalid(format!(
                            "row {}, column '{name}': value '{cell}' is not a finite number",
                            rows + block.len() / n_features
                        )))
                    }
                }
            }
        }
        let full = block.len() == BLOCK_ROWS * n_features;
        if (full || !more) && !block.is_empty() {
            let n = block.len() / n_features;
            let mut x = Matrix::new(n, n_features, std::mem::take(&mut block)).expect("whole rows");
            if let Some(scaler) = &bundle.scaler {
                scaler.transform_in_place(&mut x).map_err(|e| CliError::Invalid(e.to_string()))?;
            }
            let start = Instant::now();
            let votes = bundle.model.votes(&x).map_err(|e| CliError::Invalid(e.to_string()))?;
            seconds += start.elapsed().as_secs_f64();
            for v in votes {
                let label = u8::from(2.0 * f64::from(v) > n_trees);
                writeln!(output, "{label},{}", f64::from(v) / n_trees).map_err(write_err)?;
            }
            rows += n;
            block = x.into_vec();
            block.clear();
        }
        if !more {
            break;
        }
    }
    output.flush().map_err(write_err)?;
    if rows == 0 {
        return Err(CliError::Invalid("input has no data rows".into()));
    }
    Ok(TimingSummary {
        rows,
        seconds,
        rows_per_second: if seconds > 0.0 { rows as f64 / seconds } else { f64::INFINITY },
        wall_seconds: wall.elapsed().as_secs_f64(),
    })
}
