//! Flow CSV ingestion, cleaning, label encoding and standard scaling.
//!
//! Input files follow the CICFlowMeter layout: one flow per line, a header
//! row with feature names (often padded with spaces), identifier columns such
//! as `Flow ID` or `Source IP`, and a text `Label` column. Cleaning turns that
//! into a purely numeric [`Dataset`] with binary labels (attack = 1).

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::{self, Read, Write};
use std::path::Path;

use csv::StringRecord;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{Matrix, ShapeError};

/// Label value for the benign class.
pub const BENIGN: u8 = 0;
/// Label value for the attack class.
pub const ATTACK: u8 = 1;

pub const DEFAULT_LABEL_COLUMN: &str = "Label";

/// Identifier columns of a CIC-DDoS2019 export that carry no flow statistics.
pub const CIC_IDENTIFIER_COLUMNS: [&str; 6] =
    ["Unnamed: 0", "Flow ID", "Source IP", "Destination IP", "Timestamp", "SimillarHTTP"];

#[derive(Debug, Error)]
pub enum FlowDataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed CSV in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: no rows")]
    NoRows { path: String },
    #[error("{path}: row {row} has {found} cells, expected {expected}")]
    RaggedRow { path: String, row: usize, expected: usize, found: usize },
    #[error("label column '{0}' not found")]
    MissingLabelColumn(String),
    #[error("no feature columns left after exclusions")]
    NoFeatures,
    #[error("row {row}, column '{column}': value '{value}' is not a finite number")]
    BadValue { row: usize, column: String, value: String },
    #[error("row {row}: label '{label}' is not covered by the label mapping")]
    UnmappedLabel { row: usize, label: String },
    #[error("all {rows_in} rows were dropped during cleaning")]
    AllRowsDropped { rows_in: usize },
    #[error("label vector has {labels} entries for {rows} rows")]
    LabelLength { rows: usize, labels: usize },
    #[error("label value {value} at row {row} is not 0 or 1")]
    BadLabel { row: usize, value: u8 },
    #[error("feature matrix contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{names} feature names for {cols} columns")]
    FeatureNames { names: usize, cols: usize },
    #[error("dataset must have at least one row and one feature")]
    EmptyDataset,
    #[error("cannot fit a scaler on an empty matrix")]
    EmptyMatrix,
    #[error("matrix has {found} columns, scaler expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("class {class} has {count} rows; a stratified split needs at least 2")]
    ClassTooSmall { class: u8, count: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Unparsed CSV contents.
#[derive(Clone, Debug)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<StringRecord>,
    pub source_path: String,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader)
}

fn open(path: &Path) -> Result<File, FlowDataError> {
    File::open(path).map_err(|source| FlowDataError::Io { path: path.display().to_string(), source })
}

enum CsvEvent {
    Header(Vec<String>),
    /// Zero-based data row index and its record.
    Row(usize, StringRecord),
}

/// Streams the records of a CSV file, checking row widths. The header event
/// always comes first.
fn for_each_record<F>(path: &Path, has_header: bool, mut on_event: F) -> Result<(), FlowDataError>
where
    F: FnMut(CsvEvent) -> Result<(), FlowDataError>,
{
    let shown = path.display().to_string();
    let mut reader = csv_reader(open(path)?);
    let mut records = reader.records();

    let first = match records.next() {
        Some(r) => r.map_err(|source| FlowDataError::Csv { path: shown.clone(), source })?,
        None => return Err(FlowDataError::NoRows { path: shown }),
    };
    let width = first.len();
    let mut n_rows = 0usize;
    if has_header {
        on_event(CsvEvent::Header(first.iter().map(str::to_owned).collect()))?;
    } else {
        on_event(CsvEvent::Header((0..width).map(|j| format!("col_{j}")).collect()))?;
        on_event(CsvEvent::Row(0, first))?;
        n_rows = 1;
    }

    for record in records {
        let record = record.map_err(|source| FlowDataError::Csv { path: shown.clone(), source })?;
        // blank lines are skipped by the csv reader; a lone empty field is not a row
        if record.len() != width {
            return Err(FlowDataError::RaggedRow { path: shown, row: n_rows, expected: width, found: record.len() });
        }
        on_event(CsvEvent::Row(n_rows, record))?;
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(FlowDataError::NoRows { path: shown });
    }
    Ok(())
}

/// Reads a whole CSV file into memory.
///
/// Without a header, columns are named `col_0..col_{k-1}`.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<RawTable, FlowDataError> {
    let path = path.as_ref();
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for_each_record(path, has_header, |event| {
        match event {
            CsvEvent::Header(h) => header = h,
            CsvEvent::Row(_, record) => rows.push(record),
        }
        Ok(())
    })?;
    Ok(RawTable { header, rows, source_path: path.display().to_string() })
}

/// Knobs for [`clean`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanPolicy {
    pub label_column: String,
    /// Drop rows holding `Infinity`, `NaN` or unparseable cells instead of failing.
    pub drop_nonfinite: bool,
    pub drop_duplicate_rows: bool,
    /// Labels encoded as benign (0). Compared case-insensitively.
    pub negative_labels: BTreeSet<String>,
    /// Labels encoded as attack (1). `None` maps every non-negative label to 1.
    pub positive_labels: Option<BTreeSet<String>>,
    pub excluded_columns: BTreeSet<String>,
}

impl Default for CleanPolicy {
    fn default() -> Self {
        Self {
            label_column: DEFAULT_LABEL_COLUMN.to_owned(),
            drop_nonfinite: true,
            drop_duplicate_rows: true,
            negative_labels: BTreeSet::from(["BENIGN".to_owned()]),
            positive_labels: None,
            excluded_columns: CIC_IDENTIFIER_COLUMNS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl CleanPolicy {
    /// Keeps every row and column except the label.
    pub fn permissive() -> Self {
        Self { drop_nonfinite: false, drop_duplicate_rows: false, excluded_columns: BTreeSet::new(), ..Self::default() }
    }

    fn encode_label(&self, row: usize, label: &str) -> Result<u8, FlowDataError> {
        let matches = |set: &BTreeSet<String>| set.iter().any(|s| s.eq_ignore_ascii_case(label));
        if matches(&self.negative_labels) {
            return Ok(BENIGN);
        }
        match &self.positive_labels {
            None => Ok(ATTACK),
            Some(set) if matches(set) => Ok(ATTACK),
            Some(_) => Err(FlowDataError::UnmappedLabel { row, label: label.to_owned() }),
        }
    }
}

/// Row accounting for one cleaning pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanStats {
    pub rows_in: usize,
    pub rows_out: usize,
    pub nonfinite_dropped: usize,
    pub duplicates_dropped: usize,
    pub columns_excluded: Vec<String>,
}

/// Numeric feature matrix with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<u8>, feature_names: Vec<String>) -> Result<Self, FlowDataError> {
        if x.n_rows() == 0 || x.n_cols() == 0 {
            return Err(FlowDataError::EmptyDataset);
        }
        if y.len() != x.n_rows() {
            return Err(FlowDataError::LabelLength { rows: x.n_rows(), labels: y.len() });
        }
        if feature_names.len() != x.n_cols() {
            return Err(FlowDataError::FeatureNames { names: feature_names.len(), cols: x.n_cols() });
        }
        if let Some((row, &value)) = y.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(FlowDataError::BadLabel { row, value });
        }
        if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(FlowDataError::NonFinite { row: pos / x.n_cols(), col: pos % x.n_cols() });
        }
        Ok(Self { x, y, feature_names })
    }

    pub fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    /// `[benign, attack]` row counts.
    pub fn class_counts(&self) -> [usize; 2] {
        class_counts(&self.y)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Writes the dataset in the same CSV layout [`load_csv`] and [`clean`] read.
    ///
    /// Labels are written as `benign_name` / `attack_name`; values use the
    /// shortest representation that parses back to the identical `f64`.
    pub fn write_csv<W: Write>(
        &self,
        writer: W,
        label_column: &str,
        benign_name: &str,
        attack_name: &str,
    ) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(label_column);
        w.write_record(&header)?;
        let mut buf = String::new();
        for (row, &label) in self.x.rows_iter().zip(&self.y) {
            for v in row {
                buf.clear();
                use std::fmt::Write as _;
                let _ = write!(buf, "{v}");
                w.write_field(&buf)?;
            }
            w.write_field(if label == ATTACK { attack_name } else { benign_name })?;
            w.write_record(None::<&[u8]>)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn class_counts(y: &[u8]) -> [usize; 2] {
    let ones = y.iter().filter(|&&v| v == ATTACK).count();
    [y.len() - ones, ones]
}

/// Incremental cleaner shared by the in-memory and streaming paths.
struct Cleaner<'a> {
    policy: &'a CleanPolicy,
    header: Vec<String>,
    label_col: usize,
    feature_cols: Vec<usize>,
    data: Vec<f64>,
    y: Vec<u8>,
    stats: CleanStats,
    seen: HashMap<u64, Vec<u32>>,
    scratch: Vec<f64>,
}

impl<'a> Cleaner<'a> {
    fn new(header: Vec<String>, policy: &'a CleanPolicy) -> Result<Self, FlowDataError> {
        let label_col = header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(policy.label_column.trim()))
            .ok_or_else(|| FlowDataError::MissingLabelColumn(policy.label_column.clone()))?;
        let excluded = |name: &str| policy.excluded_columns.iter().any(|e| e.trim().eq_ignore_ascii_case(name.trim()));
        let mut feature_cols = Vec::new();
        let mut columns_excluded = Vec::new();
        for (j, name) in header.iter().enumerate() {
            if j == label_col {
                continue;
            }
            if excluded(name) {
                columns_excluded.push(name.trim().to_owned());
            } else {
                feature_cols.push(j);
            }
        }
        if feature_cols.is_empty() {
            return Err(FlowDataError::NoFeatures);
        }
        Ok(Self {
            policy,
            header,
            label_col,
            feature_cols,
            data: Vec::new(),
            y: Vec::new(),
            stats: CleanStats { columns_excluded, ..CleanStats::default() },
            seen: HashMap::new(),
            scratch: Vec::new(),
        })
    }

    fn push(&mut self, row: usize, record: &StringRecord) -> Result<(), FlowDataError> {
        self.stats.rows_in += 1;
        self.scratch.clear();
        for &j in &self.feature_cols {
            let cell = record.get(j).unwrap_or("").trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => self.scratch.push(if v == 0.0 { 0.0 } else { v }),
                _ if self.policy.drop_nonfinite => {
                    self.stats.nonfinite_dropped += 1;
                    return Ok(());
                }
                _ => {
                    return Err(FlowDataError::BadValue {
                        row,
                        column: self.header[j].trim().to_owned(),
                        value: cell.to_owned(),
                    })
                }
            }
        }
        let label = self.policy.encode_label(row, record.get(self.label_col).unwrap_or("").trim())?;

        if self.policy.drop_duplicate_rows {
            let mut hasher = DefaultHasher::new();
            for v in &self.scratch {
                v.to_bits().hash(&mut hasher);
            }
            label.hash(&mut hasher);
            let width = self.feature_cols.len();
            let bucket = self.seen.entry(hasher.finish()).or_default();
            let duplicate = bucket.iter().any(|&kept| {
                let kept = kept as usize;
                self.y[kept] == label && self.data[kept * width..(kept + 1) * width] == self.scratch[..]
            });
            if duplicate {
                self.stats.duplicates_dropped += 1;
                return Ok(());
            }
            bucket.push(self.y.len() as u32);
        }

        self.data.extend_from_slice(&self.scratch);
        self.y.push(label);
        Ok(())
    }

    fn finish(mut self) -> Result<(Dataset, CleanStats), FlowDataError> {
        if self.y.is_empty() {
            return Err(FlowDataError::AllRowsDropped { rows_in: self.stats.rows_in });
        }
        self.stats.rows_out = self.y.len();
        let names = self.feature_cols.iter().map(|&j| self.header[j].trim().to_owned()).collect();
        let x = Matrix::new(self.y.len(), self.feature_cols.len(), self.data)?;
        Ok((Dataset { x, y: self.y, feature_names: names }, self.stats))
    }
}

/// Converts a raw table into a numeric dataset according to `policy`.
pub fn clean(raw: &RawTable, policy: &CleanPolicy) -> Result<(Dataset, CleanStats), FlowDataError> {
    let mut cleaner = Cleaner::new(raw.header.clone(), policy)?;
    for (row, record) in raw.rows.iter().enumerate() {
        cleaner.push(row, record)?;
    }
    cleaner.finish()
}

/// [`load_csv`] followed by [`clean`] without holding the raw text in memory.
pub fn load_clean(
    path: impl AsRef<Path>,
    has_header: bool,
    policy: &CleanPolicy,
) -> Result<(Dataset, CleanStats), FlowDataError> {
    let mut cleaner: Option<Cleaner> = None;
    for_each_record(path.as_ref(), has_header, |event| match event {
        CsvEvent::Header(header) => {
            cleaner = Some(Cleaner::new(header, policy)?);
            Ok(())
        }
        CsvEvent::Row(row, record) => cleaner.as_mut().expect("header precedes rows").push(row, &record),
    })?;
    cleaner.expect("header precedes rows").finish()
}

/// Per-feature mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ScalerParams {
    pub fn identity(n_features: usize) -> Self {
        Self { means: vec![0.0; n_features], stds: vec![1.0; n_features] }
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    /// Scales `x` in place.
    pub fn transform_in_place(&self, x: &mut Matrix) -> Result<(), FlowDataError> {
        if x.n_cols() != self.means.len() {
            return Err(FlowDataError::DimensionMismatch { expected: self.means.len(), found: x.n_cols() });
        }
        let width = x.n_cols();
        if width == 0 {
            return Ok(());
        }
        for row in x.as_mut_slice().chunks_exact_mut(width) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.means).zip(&self.stds) {
                *v = if s == 0.0 { 0.0 } else { (*v - m) / s };
            }
        }
        Ok(())
    }
}

/// Fits a standard scaler. Constant columns get a standard deviation of 0.
pub fn fit_scaler(x: &Matrix) -> Result<ScalerParams, FlowDataError> {
    fit_scaler_rows(x, None)
}

/// Fits on the listed rows only (all rows when `rows` is `None`).
pub fn fit_scaler_rows(x: &Matrix, rows: Option<&[usize]>) -> Result<ScalerParams, FlowDataError> {
    let n = rows.map_or(x.n_rows(), <[usize]>::len);
    if n == 0 || x.n_cols() == 0 {
        return Err(FlowDataError::EmptyMatrix);
    }
    let d = x.n_cols();
    let each_row = |f: &mut dyn FnMut(&[f64])| match rows {
        Some(rows) => rows.iter().for_each(|&i| f(x.row(i))),
        None => x.rows_iter().for_each(f),
    };

    let mut sums = vec![0.0; d];
    each_row(&mut |row| sums.iter_mut().zip(row).for_each(|(s, v)| *s += v));
    let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();

    // second pass on centred values
    let mut sq = vec![0.0; d];
    each_row(&mut |row| {
        for ((acc, v), m) in sq.iter_mut().zip(row).zip(&means) {
            let c = v - m;
            *acc += c * c;
        }
    });
    let stds = sq
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let std = (s / n as f64).sqrt();
            // a constant column can leave rounding residue; treat it as exactly constant
            let constant = match rows {
                Some(rows) => rows.iter().all(|&i| x.get(i, j) == x.get(rows[0], j)),
                None => x.column(j).all(|v| v == x.get(0, j)),
            };
            if constant {
                0.0
            } else {
                std
            }
        })
        .collect();
    Ok(ScalerParams { means, stds })
}

pub fn apply_scaler(x: &Matrix, params: &ScalerParams) -> Result<Matrix, FlowDataError> {
    let mut out = x.clone();
    params.transform_in_place(&mut out)?;
    Ok(out)
}

/// Stratified hold-out split of row indices, returned as `(train, test)`.
///
/// Each class contributes `round(count * test_fraction)` rows to the test
/// side, clamped so both sides keep at least one row of every class. Both
/// index lists are sorted.
pub fn stratified_holdout(y: &[u8], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), FlowDataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(FlowDataError::BadFraction(test_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(y.len());
    let mut test = Vec::new();
    for class in [BENIGN, ATTACK] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        let count = members.len();
        if count < 2 {
            return Err(FlowDataError::ClassTooSmall { class, count });
        }
        members.shuffle(&mut rng);
        let n_test = ((count as f64 * test_fraction).round() as usize).clamp(1, count - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified train/test split of a dataset; see [`stratified_holdout`].
pub fn train_test_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), FlowDataError> {
    let (train, test) = stratified_holdout(&d.y, test_fraction, seed)?;
    Ok((d.subset(&train), d.subset(&test)))
}
