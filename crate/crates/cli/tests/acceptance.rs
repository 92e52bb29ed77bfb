//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! Criterion 10 needs a real CIC-DDoS2019 Syn-day CSV and only runs when
//! `SYNRF_CIC_CSV` points at one.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Read};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use synrf_cli::commands::{cmd_train, cmd_tune};
use synrf_cli::config::RunConfig;
use synrf_cli::predict::{predict_stream, PredictOptions};
use synrf_cli::report::strip_timing;
use synrf_core::crossval::stratified_kfold;
use synrf_core::flowdata::{self, load_clean, stratified_holdout, CleanPolicy, Dataset};
use synrf_core::forest::{fit_forest, grow_tree, load_bundle, load_model, save_model, TreeNode};
use synrf_core::metrics::{derive_metrics, roc_auc};
use synrf_core::synthgen::generate;
use synrf_core::tuner::grid_search_with;
use synrf_core::{
    ConfusionMatrix, CrossValConfig, CrossValReport, FeatureMode, ForestHyperparams, GridSpec, Matrix, MetricsReport,
    ScalingMode, SynthConfig,
};

type Outcome = Result<String, String>;

struct Suite {
    failed: usize,
    skipped: usize,
}

impl Suite {
    /// Runs one criterion. `limit` is its runtime bound, checked after it returns.
    fn run(&mut self, id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Option<Outcome>) {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Some(Err(format!("panicked: {msg}")))
        });
        let took = start.elapsed();
        let outcome = match (outcome, limit) {
            (None, _) => {
                self.skipped += 1;
                println!("[SKIP] {id:>2} {name}");
                return;
            }
            (Some(Ok(_)), Some(limit)) if took > limit => {
                Err(format!("took {:.1} s, limit {:.1} s", took.as_secs_f64(), limit.as_secs_f64()))
            }
            (Some(o), _) => o,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {id:>2} {name} ({:.2} s): {detail}", took.as_secs_f64()),
            Err(detail) => {
                self.failed += 1;
                println!("[FAIL] {id:>2} {name} ({:.2} s): {detail}", took.as_secs_f64());
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

// 1

fn known_counts_arithmetic() -> Outcome {
    let m = ConfusionMatrix { true_pos: 5_867_033, false_pos: 2, false_neg: 7, true_neg: 36_180 };
    let (d, flags) = derive_metrics(&m).map_err(|e| e.to_string())?;
    ensure(flags.is_empty(), || format!("unexpected flags {flags:?}"))?;
    for (name, got, want) in [
        ("accuracy", d.accuracy, 0.99999848),
        ("precision", d.precision, 0.99999966),
        ("recall", d.recall, 0.99999881),
        ("f1", d.f1, 0.99999923),
    ] {
        ensure((got - want).abs() <= 1e-7, || format!("{name} = {got}, want {want} within 1e-7"))?;
    }
    Ok(format!("accuracy {:.8} precision {:.8} recall {:.8} f1 {:.8}", d.accuracy, d.precision, d.recall, d.f1))
}

// 2

/// Exhaustive stump search: every feature, every midpoint between distinct
/// sorted values, maximizing the purity sum `sum_side (c0^2 + c1^2) / n_side`
/// compared as exact fractions. Ties keep the lowest feature, then the lowest
/// threshold.
fn oracle_stump(x: &[Vec<f64>], y: &[u8]) -> Option<(usize, f64)> {
    let n_features = x[0].len();
    let mut best: Option<(u128, u128, usize, f64)> = None;
    for f in 0..n_features {
        let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let mut left = [0u128; 2];
            let mut right = [0u128; 2];
            for (row, &label) in x.iter().zip(y) {
                let side = if row[f] <= t { &mut left } else { &mut right };
                side[label as usize] += 1;
            }
            let (nl, nr) = (left[0] + left[1], right[0] + right[1]);
            let num = (left[0] * left[0] + left[1] * left[1]) * nr + (right[0] * right[0] + right[1] * right[1]) * nl;
            let den = nl * nr;
            let better = match best {
                None => true,
                Some((bn, bd, _, _)) => num * bd > bn * den,
            };
            if better {
                best = Some((num, den, f, t));
            }
        }
    }
    best.map(|(_, _, f, t)| (f, t))
}

fn stump_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hp = ForestHyperparams::new(1, 1, FeatureMode::All, 0);
    let mut integer_instances = 0;
    for instance in 0..50 {
        // every other instance uses small integers so value and score ties are common
        let integers = instance % 2 == 0;
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                (0..10)
                    .map(|_| if integers { rng.random_range(0..6) as f64 } else { rng.random::<f64>() * 10.0 - 5.0 })
                    .collect()
            })
            .collect();
        let signal = rng.random_range(0..10);
        let y: Vec<u8> = rows.iter().map(|r| u8::from(r[signal] + rng.random::<f64>() * 4.0 > 3.0)).collect();
        if y.iter().all(|&v| v == y[0]) {
            return Err(format!("instance {instance} drew a single class"));
        }
        integer_instances += usize::from(integers);
        let want = oracle_stump(&rows, &y).ok_or("oracle found no split")?;
        let x = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let all: Vec<usize> = (0..200).collect();
        let tree = grow_tree(&x, &y, &all, &hp, &mut rng).map_err(|e| e.to_string())?;
        match tree.root() {
            TreeNode::Internal { feature, threshold, .. } if (*feature, *threshold) == want => {}
            other => return Err(format!("instance {instance}: tree root {other:?}, oracle {want:?}")),
        }
        ensure(tree.depth() == 1, || format!("instance {instance}: depth {}", tree.depth()))?;
    }
    Ok(format!("50 of 50 roots match ({integer_instances} tie-heavy integer instances)"))
}

// 3

fn auc_pairs(y: &[u8], s: &[f64]) -> f64 {
    let mut twice_wins = 0u64;
    let (mut pos, mut neg) = (0u64, 0u64);
    for (i, &yi) in y.iter().enumerate() {
        if yi == 1 {
            pos += 1;
        } else {
            neg += 1;
            continue;
        }
        for (j, &yj) in y.iter().enumerate() {
            if yj == 0 {
                twice_wins += if s[i] > s[j] {
                    2
                } else if s[i] == s[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    twice_wins as f64 / (2 * pos * neg) as f64
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for instance in 0..1000 {
        let n = rng.random_range(2..=200);
        let discrete = instance % 3 == 0;
        let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
        y[0] = 0;
        y[1] = 1;
        let s: Vec<f64> =
            (0..n).map(|_| if discrete { rng.random_range(0..5) as f64 / 4.0 } else { rng.random::<f64>() }).collect();
        let got = roc_auc(&y, &s).map_err(|e| e.to_string())?;
        let want = auc_pairs(&y, &s);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-12, || format!("instance {instance}: {got} vs pair count {want}"))?;
    }
    Ok(format!("1000 instances, max abs diff {worst:e}"))
}

// 4

fn stratification_quotas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = CrossValConfig { n_splits: 5, shuffle: true, random_state: 42 };
    let mut max_ratio = 0usize;
    for instance in 0..100 {
        let n = rng.random_range(50..=10_000usize);
        let ratio = rng.random_range(1..=500usize);
        let minority = n.div_ceil(ratio + 1).max(5);
        let mut y = vec![0u8; n];
        let mut idx: Vec<usize> = (0..n).collect();
        for k in 0..minority {
            let j = rng.random_range(k..n);
            idx.swap(k, j);
            y[idx[k]] = 1;
        }
        let counts = [n - minority, minority];
        max_ratio = max_ratio.max(counts[0] / counts[1]);
        let plan = stratified_kfold(&y, &cfg).map_err(|e| e.to_string())?;
        ensure(plan.folds.len() == 5, || format!("instance {instance}: {} folds", plan.folds.len()))?;
        let mut seen = vec![0u8; n];
        for (k, fold) in plan.folds.iter().enumerate() {
            for class in 0..2u8 {
                let c = fold.test.iter().filter(|&&i| y[i] == class).count() as f64;
                let quota = counts[class as usize] as f64 / 5.0;
                ensure((c - quota).abs() <= 1.0, || {
                    format!("instance {instance} fold {k} class {class}: {c} vs {quota}")
                })?;
            }
            for &i in &fold.test {
                seen[i] += 1;
            }
            let test: BTreeSet<usize> = fold.test.iter().copied().collect();
            let train: BTreeSet<usize> = fold.train.iter().copied().collect();
            let complement: BTreeSet<usize> = (0..n).filter(|i| !test.contains(i)).collect();
            ensure(train == complement && train.len() == fold.train.len(), || {
                format!("instance {instance} fold {k}: train is not the complement of test")
            })?;
        }
        ensure(seen.iter().all(|&s| s == 1), || format!("instance {instance}: test sets do not partition the rows"))?;
    }
    Ok(format!("100 label vectors, imbalance up to {max_ratio}:1"))
}

// 5

fn stub_report(hp: ForestHyperparams, accuracy: f64, pred_time_s: f64) -> CrossValReport {
    let m = MetricsReport {
        accuracy,
        precision: accuracy,
        recall: accuracy,
        f1: accuracy,
        roc_auc: accuracy,
        pred_time_s,
        matrix: Default::default(),
        degenerate_flags: Default::default(),
    };
    CrossValReport {
        hyperparams: hp,
        scaling_mode: ScalingMode::Paper,
        folds: vec![m.clone()],
        mean: m.clone(),
        pooled: m,
    }
}

fn replay(table: &[(f64, f64)]) -> usize {
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_pred_time = f64::INFINITY;
    let mut best = usize::MAX;
    for (i, &(accuracy, pred_time)) in table.iter().enumerate() {
        if accuracy > best_accuracy || (accuracy == best_accuracy && pred_time < best_pred_time) {
            best = i;
            best_accuracy = accuracy;
            best_pred_time = pred_time;
        }
    }
    best
}

fn grid_and_selection() -> Outcome {
    let grid = GridSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut keep_first = 0;
    for table_no in 0..200 {
        // coarse values force accuracy ties and exact time ties
        let table: Vec<(f64, f64)> = (0..grid.len())
            .map(|_| (rng.random_range(95..=100) as f64 / 100.0, rng.random_range(1..=4) as f64 / 10.0))
            .collect();
        let mut evaluated = 0;
        let result = grid_search_with(&grid, &CrossValConfig::default(), ScalingMode::Paper, 42, |configs| {
            evaluated = configs.len();
            Ok(configs.iter().zip(&table).map(|(hp, &(a, t))| stub_report(hp.clone(), a, t)).collect())
        })
        .map_err(|e| e.to_string())?;
        ensure(evaluated == 48, || format!("{evaluated} configurations evaluated"))?;
        let distinct: BTreeSet<_> = result
            .per_config
            .iter()
            .map(|r| (r.hyperparams.n_estimators, r.hyperparams.max_depth, r.hyperparams.feature_mode))
            .collect();
        ensure(distinct.len() == 48, || format!("{} distinct configurations", distinct.len()))?;
        let want = replay(&table);
        let got = result.per_config.iter().position(|r| r.hyperparams == result.best).unwrap();
        ensure(got == want, || format!("table {table_no}: picked {got}, replay picks {want}"))?;
        let (a, t) = table[want];
        if table[want + 1..].iter().any(|&(a2, t2)| a2 == a && t2 == t) {
            keep_first += 1;
        }
    }
    Ok(format!("48 configurations; 200 stub tables agree with the replay, {keep_first} with exact later ties"))
}

// 6

fn synth_file(dir: &Path, name: &str, cfg: &SynthConfig) -> Result<PathBuf, String> {
    let data = generate(cfg).map_err(|e| e.to_string())?;
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| e.to_string())?;
    data.write_csv(io::BufWriter::new(file), "Label", "BENIGN", "Syn").map_err(|e| e.to_string())?;
    Ok(path)
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let synth = SynthConfig {
        n_rows: 163_000,
        attack_fraction: 162.0 / 163.0,
        class_separation: 4.0,
        noise_std: 1.0,
        ..SynthConfig::default()
    };
    let input = synth_file(dir.path(), "flows.csv", &synth)?;
    let start = Instant::now();
    let cfg = RunConfig {
        input: Some(input),
        output_dir: dir.path().join("out"),
        seed: 42,
        folds: 5,
        ..RunConfig::default()
    };
    let tuned = cmd_tune(&cfg).map_err(|e| e.to_string())?;
    let tune_s = start.elapsed().as_secs_f64();
    ensure(tuned.per_config.len() == 48, || format!("{} configurations tuned", tuned.per_config.len()))?;
    let train_cfg = RunConfig { n_estimators: 20, max_depth: 10, feature_mode: FeatureMode::All, ..cfg };
    let report = cmd_train(&train_cfg).map_err(|e| e.to_string())?;
    let total_s = start.elapsed().as_secs_f64();
    let m = &report.metrics;
    for (name, v) in [("accuracy", m.accuracy), ("precision", m.precision), ("recall", m.recall), ("f1", m.f1)] {
        ensure(v >= 0.999, || format!("{name} = {v} < 0.999"))?;
    }
    ensure(total_s < 600.0, || format!("tune + train took {total_s:.0} s"))?;
    Ok(format!(
        "tune {tune_s:.0} s, train+eval {:.1} s; held-out {} rows: accuracy {:.6} precision {:.6} recall {:.6} f1 {:.6} roc_auc {:.6}",
        total_s - tune_s,
        report.test_rows,
        m.accuracy,
        m.precision,
        m.recall,
        m.f1,
        m.roc_auc
    ))
}

// 7

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let synth = SynthConfig {
        n_rows: 3000,
        attack_fraction: 0.3,
        n_features: 20,
        class_separation: 0.6,
        ..SynthConfig::default()
    };
    let input = synth_file(dir.path(), "flows.csv", &synth)?;
    let mut stripped = Vec::new();
    let mut timing_decided = false;
    for (run, threads) in [(0, 1), (1, 2)] {
        let cfg = RunConfig {
            input: Some(input.clone()),
            output_dir: dir.path().join(format!("run{run}")),
            ..RunConfig::default()
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let result = pool.install(|| cmd_tune(&cfg)).map_err(|e| e.to_string())?;
        timing_decided |= result.best_depends_on_timing();
        let text = fs::read_to_string(cfg.out_path("tune_result.json")).map_err(|e| e.to_string())?;
        let mut v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        strip_timing(&mut v);
        stripped.push(serde_json::to_vec_pretty(&v).map_err(|e| e.to_string())?);
    }
    ensure(stripped[0] == stripped[1], || "stripped tune results differ".into())?;
    Ok(format!(
        "{} identical bytes over 48 configurations (1 vs 2 threads); best {}",
        stripped[0].len(),
        if timing_decided { "timing-decided, excluded" } else { "accuracy-decided, compared" }
    ))
}

// 8

/// Serves a dataset as CSV text, formatting rows only as they are read.
struct LazyCsv {
    data: Dataset,
    next_row: usize,
    buf: Vec<u8>,
    pos: usize,
}

impl LazyCsv {
    fn new(data: Dataset) -> Self {
        let mut header = data.feature_names.join(",");
        header.push_str(",Label\n");
        Self { data, next_row: 0, buf: header.into_bytes(), pos: 0 }
    }

    fn refill(&mut self) {
        use std::io::Write as _;
        self.buf.clear();
        self.pos = 0;
        let end = (self.next_row + 512).min(self.data.n_rows());
        for i in self.next_row..end {
            for v in self.data.x.row(i) {
                write!(self.buf, "{v},").unwrap();
            }
            self.buf.extend_from_slice(if self.data.y[i] == 1 { b"Syn\n" } else { b"BENIGN\n" });
        }
        self.next_row = end;
    }
}

impl Read for LazyCsv {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.buf.len() {
            self.refill();
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

fn throughput() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let train_input = synth_file(dir.path(), "train.csv", &SynthConfig { n_rows: 20_000, ..SynthConfig::default() })?;
    let cfg = RunConfig {
        input: Some(train_input),
        output_dir: dir.path().to_path_buf(),
        n_estimators: 20,
        max_depth: 10,
        feature_mode: FeatureMode::All,
        ..RunConfig::default()
    };
    cmd_train(&cfg).map_err(|e| e.to_string())?;
    let bundle = load_bundle(cfg.out_path("model.bin")).map_err(|e| e.to_string())?;

    let rows =
        generate(&SynthConfig { n_rows: 1_000_000, seed: 8, ..SynthConfig::default() }).map_err(|e| e.to_string())?;
    ensure(rows.n_features() == 82, || format!("{} features", rows.n_features()))?;
    let opts = PredictOptions { has_header: true, label_column: "Label", excluded_columns: Vec::new() };
    let timing = predict_stream(&bundle, LazyCsv::new(rows), io::sink(), &opts).map_err(|e| e.to_string())?;
    ensure(timing.rows == 1_000_000, || format!("{} rows scored", timing.rows))?;
    ensure(timing.rows_per_second >= 100_000.0, || format!("{:.0} rows/s < 100000", timing.rows_per_second))?;
    Ok(format!(
        "{:.0} rows/s in prediction ({:.3} s for 1M rows); {:.0} rows/s including CSV parsing",
        timing.rows_per_second,
        timing.seconds,
        timing.rows as f64 / timing.wall_seconds
    ))
}

// 9

fn round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let train = generate(&SynthConfig { n_rows: 5000, ..SynthConfig::default() }).map_err(|e| e.to_string())?;
    let model = fit_forest(&train.x, &train.y, &ForestHyperparams::default()).map_err(|e| e.to_string())?;
    let path = dir.path().join("model.bin");
    save_model(&model, &path).map_err(|e| e.to_string())?;
    let loaded = load_model(&path).map_err(|e| e.to_string())?;

    // noisy draws from both classes so labels and scores vary
    let x = generate(&SynthConfig { n_rows: 10_000, noise_std: 3.0, seed: 9, ..SynthConfig::default() })
        .map_err(|e| e.to_string())?
        .x;
    let (p1, p2) = (model.predict(&x).map_err(|e| e.to_string())?, loaded.predict(&x).map_err(|e| e.to_string())?);
    let (s1, s2) =
        (model.predict_score(&x).map_err(|e| e.to_string())?, loaded.predict_score(&x).map_err(|e| e.to_string())?);
    ensure(p1 == p2, || "predictions differ after reload".into())?;
    ensure(s1.iter().zip(&s2).all(|(a, b)| a.to_bits() == b.to_bits()), || "scores differ after reload".into())?;
    let attacks = p1.iter().filter(|&&p| p == 1).count();
    let distinct_scores: BTreeSet<u64> = s1.iter().map(|s| s.to_bits()).collect();

    let bytes = fs::read(&path).map_err(|e| e.to_string())?;
    let bad = dir.path().join("bad.bin");
    let mut corrupt_cases = 0;
    let mut step = (bytes.len() / 200).max(1);
    if step % 2 == 0 {
        step += 1;
    }
    for pos in (0..bytes.len()).step_by(step).chain([bytes.len() - 1]) {
        let mut b = bytes.clone();
        b[pos] ^= 0x5a;
        fs::write(&bad, &b).map_err(|e| e.to_string())?;
        ensure(load_model(&bad).is_err(), || format!("byte {pos} flipped still loads"))?;
        corrupt_cases += 1;
    }
    let mut cut_cases = 0;
    for len in [0, 1, 4, 8, 11, 16, 31, bytes.len() / 3, bytes.len() / 2, bytes.len() - 8, bytes.len() - 1] {
        fs::write(&bad, &bytes[..len]).map_err(|e| e.to_string())?;
        ensure(load_model(&bad).is_err(), || format!("truncated to {len} bytes still loads"))?;
        cut_cases += 1;
    }
    Ok(format!(
        "10000 rows ({attacks} attack, {} distinct scores) identical labels and score bits; {corrupt_cases} corrupted and {cut_cases} truncated files rejected",
        distinct_scores.len()
    ))
}

// 10

fn real_data() -> Option<Outcome> {
    let path = PathBuf::from(std::env::var_os("SYNRF_CIC_CSV")?);
    Some((|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let (data, stats) = load_clean(&path, true, &CleanPolicy::default()).map_err(|e| e.to_string())?;
        let (_, sample) = stratified_holdout(&data.y, 0.01, 42).map_err(|e| e.to_string())?;
        let sub = data.subset(&sample);
        drop(data);
        let input = dir.path().join("sample.csv");
        let file = fs::File::create(&input).map_err(|e| e.to_string())?;
        sub.write_csv(io::BufWriter::new(file), "Label", "BENIGN", "ATTACK").map_err(|e| e.to_string())?;
        let [benign, attack] = flowdata::class_counts(&sub.y);
        let cfg = RunConfig { input: Some(input), output_dir: dir.path().join("out"), ..RunConfig::default() };
        let tuned = cmd_tune(&cfg).map_err(|e| e.to_string())?;
        let train_cfg = RunConfig { tune_result: Some(cfg.out_path("tune_result.json")), ..cfg };
        let report = cmd_train(&train_cfg).map_err(|e| e.to_string())?;
        let m = &report.metrics;
        for (name, v) in [
            ("accuracy", m.accuracy),
            ("precision", m.precision),
            ("recall", m.recall),
            ("f1", m.f1),
            ("roc_auc", m.roc_auc),
        ] {
            ensure(v >= 0.999, || format!("{name} = {v} < 0.999"))?;
        }
        let hp = &tuned.best;
        Ok(format!(
            "{} of {} cleaned rows sampled ({benign} benign, {attack} attack); best {}/{}/{}; accuracy {:.6} precision {:.6} recall {:.6} f1 {:.6} roc_auc {:.6}",
            sub.n_rows(),
            stats.rows_out,
            hp.n_estimators,
            hp.max_depth,
            hp.feature_mode,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.roc_auc
        ))
    })())
}

fn main() -> ExitCode {
    // keep panic messages inside the criterion lines
    panic::set_hook(Box::new(|_| {}));
    let mut suite = Suite { failed: 0, skipped: 0 };
    suite.run(1, "confusion-matrix metric arithmetic", secs(1), || Some(known_counts_arithmetic()));
    suite.run(2, "depth-1 tree matches brute-force stump oracle", secs(5), || Some(stump_oracle()));
    suite.run(3, "ROC AUC matches pair-counting oracle", secs(10), || Some(auc_oracle()));
    suite.run(4, "stratified fold quotas and partition", secs(5), || Some(stratification_quotas()));
    suite.run(5, "grid completeness and selection rule", secs(1), || Some(grid_and_selection()));
    suite.run(6, "end-to-end run at 163k synthetic rows", secs(600), || Some(end_to_end()));
    suite.run(7, "tune determinism without timing fields", None, || Some(determinism()));
    suite.run(8, "prediction throughput over 1M rows", None, || Some(throughput()));
    suite.run(9, "model file round trip and corruption", None, || Some(round_trip()));
    suite.run(10, "real CIC-DDoS2019 sample (set SYNRF_CIC_CSV)", None, real_data);
    let _ = panic::take_hook();
    println!("acceptance: {} failed, {} skipped", suite.failed, suite.skipped);
    if suite.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
