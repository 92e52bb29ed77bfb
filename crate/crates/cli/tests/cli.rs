use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn synrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synrf")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, name: &str, rows: usize, extra: &[&str]) -> std::path::PathBuf {
    let file = dir.join(name);
    let rows = rows.to_string();
    let mut args = vec!["synth", "--output", p(&file), "--rows", &rows, "--features", "6"];
    args.extend_from_slice(extra);
    let out = synrf(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    file
}

#[test]
fn synth_writes_header_plus_rows() {
    let dir = tempfile::tempdir().unwrap();
    let file = synth(dir.path(), "a.csv", 1000, &["--attack-fraction", "0.5"]);
    let text = fs::read_to_string(&file).unwrap();
    assert_eq!(text.lines().count(), 1001);
    assert!(text.lines().next().unwrap().ends_with(",Label"));
}

#[test]
fn synth_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.csv", 500, &["--seed", "3"]);
    let b = synth(dir.path(), "b.csv", 500, &["--seed", "3"]);
    let c = synth(dir.path(), "c.csv", 500, &["--seed", "4"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn synth_rejects_zero_attack_fraction_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("x.csv");
    let out = synrf(&["synth", "--output", p(&file), "--attack-fraction", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!file.exists());
}

const CIC_SAMPLE: &str = "\
Flow ID, Source IP,Flow Duration,Total Fwd Packets,Flow Bytes/s, Label
a,1.1.1.1,10,2,5.5,BENIGN
b,1.1.1.2,11,3,Infinity,BENIGN
c,1.1.1.3,12,4,7.5,Syn
d,1.1.1.4,13,5,NaN,Syn
e,1.1.1.5,14,6,9.5,Syn
f,1.1.1.6,14,6,9.5,Syn
g,1.1.1.7,15,7,1.5,BENIGN
";

#[test]
fn prepare_drops_nonfinite_rows_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flows.csv");
    fs::write(&input, CIC_SAMPLE).unwrap();
    let first = dir.path().join("first");
    let out = synrf(&["prepare", "--input", p(&input), "--output-dir", p(&first)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stats = read_json(&first.join("clean_stats.json"));
    assert_eq!(stats["nonfinite_dropped"], 2);
    assert_eq!(stats["duplicates_dropped"], 1);
    assert_eq!(stats["rows_out"], 4);
    assert_eq!(fs::read_to_string(&input).unwrap(), CIC_SAMPLE, "input must not change");

    let second = dir.path().join("second");
    let cleaned = first.join("cleaned.csv");
    let out = synrf(&["prepare", "--input", p(&cleaned), "--output-dir", p(&second)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(&cleaned).unwrap(), fs::read(second.join("cleaned.csv")).unwrap());
}

#[test]
fn prepare_missing_label_column_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flows.csv");
    fs::write(&input, "a,b\n1,2\n").unwrap();
    let out = synrf(&["prepare", "--input", p(&input), "--output-dir", p(dir.path()), "--label-column", "Verdict"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Verdict"), "{}", stderr(&out));
}

#[test]
fn tune_grid_override_writes_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "d.csv", 400, &[]);
    let out_dir = dir.path().join("tune");
    let out = synrf(&[
        "tune",
        "--input",
        p(&input),
        "--output-dir",
        p(&out_dir),
        "--grid-estimators",
        "10,20",
        "--grid-depths",
        "5",
        "--grid-features",
        "all",
        "--folds",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("tune_result.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let result = read_json(&out_dir.join("tune_result.json"));
    assert_eq!(result["per_config"].as_array().unwrap().len(), 2);
    assert_eq!(result["cv"]["n_splits"], 3);
    assert!(out_dir.join("best_folds.csv").is_file());
}

#[test]
fn config_file_supplies_values_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "d.csv", 300, &[]);
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"input": "{}", "folds": 2, "grid": {{"estimator_options": [5], "depth_options": [3, 4], "feature_options": ["sqrt"]}}}}"#,
            p(&input)
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("tune");
    let out = synrf(&["tune", "--config", p(&cfg), "--output-dir", p(&out_dir), "--grid-depths", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let result = read_json(&out_dir.join("tune_result.json"));
    assert_eq!(result["cv"]["n_splits"], 2);
    assert_eq!(result["grid"]["depth_options"], serde_json::json!([2]));
}

#[test]
fn train_then_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "d.csv", 600, &[]);
    let out_dir = dir.path().join("run");
    let out = synrf(&[
        "train",
        "--input",
        p(&input),
        "--output-dir",
        p(&out_dir),
        "--n-estimators",
        "10",
        "--max-depth",
        "5",
        "--feature-mode",
        "all",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = read_json(&out_dir.join("train_report.json"));
    for key in ["accuracy", "precision", "recall", "f1", "roc_auc"] {
        assert!(report["metrics"][key].as_f64().unwrap() > 0.9, "{key}: {report}");
    }
    assert_eq!(report["test_rows"], 120);
    assert!(out_dir.join("model.bin").is_file());

    let out = synrf(&["predict", "--input", p(&input), "--output-dir", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let preds = fs::read_to_string(out_dir.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 601);
    let timing = read_json(&out_dir.join("timing.json"));
    assert_eq!(timing["rows"], 600);
    assert!(timing["rows_per_second"].as_f64().unwrap() > 0.0);

    // the stored scaler makes raw input score like the training pipeline
    let truth: Vec<bool> = fs::read_to_string(&input).unwrap().lines().skip(1).map(|l| l.ends_with(",Syn")).collect();
    let hits = preds.lines().skip(1).zip(&truth).filter(|(l, &t)| l.starts_with('1') == t).count();
    assert!(hits >= 590, "{hits} of 600 correct");
}

#[test]
fn train_uses_tune_result_best() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "d.csv", 300, &[]);
    let out_dir = dir.path().join("run");
    let tuned = synrf(&[
        "tune",
        "--input",
        p(&input),
        "--output-dir",
        p(&out_dir),
        "--grid-estimators",
        "7",
        "--grid-depths",
        "3",
        "--grid-features",
        "log2",
        "--folds",
        "2",
    ]);
    assert!(tuned.status.success(), "{}", stderr(&tuned));
    let tr = out_dir.join("tune_result.json");
    let out = synrf(&["train", "--input", p(&input), "--output-dir", p(&out_dir), "--tune-result", p(&tr)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = read_json(&out_dir.join("train_report.json"));
    assert_eq!(report["hyperparams"]["n_estimators"], 7);
    assert_eq!(report["hyperparams"]["feature_mode"], "log2");
}

#[test]
fn train_missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = synrf(&["train", "--input", p(&missing), "--output-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = synrf(&["train", "--output-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_column_mismatch_exits_2_with_both_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "d.csv", 200, &[]);
    let out = synrf(&["train", "--input", p(&input), "--output-dir", p(dir.path()), "--n-estimators", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let narrow = dir.path().join("narrow.csv");
    fs::write(&narrow, "p,q,r\n1,2,3\n").unwrap();
    let out = synrf(&["predict", "--input", p(&narrow), "--output-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("3 feature columns") && msg.contains("expects 6"), "{msg}");
}

#[test]
fn predict_with_corrupt_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "d.csv", 100, &[]);
    let model = dir.path().join("model.bin");
    fs::write(&model, b"garbage").unwrap();
    let out = synrf(&["predict", "--input", p(&input), "--model", p(&model), "--output-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn threads_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "d.csv", 300, &[]);
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(threads);
        let out = synrf(&[
            "train",
            "--input",
            p(&input),
            "--output-dir",
            p(&out_dir),
            "--threads",
            threads,
            "--n-estimators",
            "8",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        reports.push(fs::read(out_dir.join("model.bin")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let out = synrf(&["train", "--input", p(&input), "--output-dir", p(dir.path()), "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let out = synrf(&["tune", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
