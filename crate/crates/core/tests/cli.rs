//! End-to-end tests of the `edgecast` binary: subcommand behavior, output
//! files, and the exit-code contract (0 ok, 2 validation, 3 numerical,
//! 4 partial scenario failure).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edgecast::eval::{data_reduction, round_half_up};
use edgecast::ingest::{SourceKind, Timestamp};
use edgecast::synth::{hourly_series_csv, SyntheticSpec};

fn edgecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgecast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_synthetic(path: &Path, hours: usize, seed: u64, phase: f64) {
    let spec = SyntheticSpec {
        phase_hours: phase,
        ..SyntheticSpec::default()
    };
    let csv = hourly_series_csv(
        "synth",
        SourceKind::InSitu,
        Timestamp::parse("2021-03-01T00:00:00Z").unwrap(),
        hours,
        &spec,
        seed,
    )
    .unwrap();
    fs::write(path, csv).unwrap();
}

/// Trains a small model and returns the weight file path.
fn train_small(dir: &Path, data: &Path) -> PathBuf {
    let config = dir.join("train.toml");
    fs::write(
        &config,
        "[model]\nhidden = 8\nwindow = 12\n\n[train]\nmax_epochs = 4\ndropout = 0.0\n",
    )
    .unwrap();
    let weights = dir.join("weights.json");
    let out = edgecast(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "11",
        "--out-weights",
        weights.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    weights
}

#[test]
fn ingest_happy_path_resamples_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    // Hour-aligned 600 s data, 36 rows -> 6 hourly rows after --resample 3600.
    let start = Timestamp::parse("2021-05-01T00:00:00Z").unwrap();
    let mut csv = String::from("when,temp\n");
    for i in 0..36i64 {
        csv.push_str(&format!(
            "{},{}\n",
            Timestamp::from_unix(start.unix() + i * 600),
            15.0 + (i as f64) * 0.01
        ));
    }
    fs::write(&raw, csv).unwrap();
    let out_path = dir.path().join("clean.csv");
    let out = edgecast(&[
        "ingest",
        "--input",
        raw.to_str().unwrap(),
        "--schema",
        "timestamp=when,value=temp",
        "--resample",
        "3600",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("accepted=36 rejected=0 gaps=0"));
    let written = fs::read_to_string(&out_path).unwrap();
    assert_eq!(written.lines().count(), 7); // header + 6 hourly means
    assert!(written.starts_with("timestamp,value\n"));
}

#[test]
fn ingest_missing_file_exits_2_with_path() {
    let out = edgecast(&[
        "ingest",
        "--input",
        "/no/such/file.csv",
        "--out",
        "/tmp/unused.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/no/such/file.csv"));
}

#[test]
fn ingest_conflicting_duplicates_name_rows() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("dup.csv");
    fs::write(
        &raw,
        "timestamp,value\n2021-01-01T00:00,1.0\n2021-01-01T00:00,2.0\n",
    )
    .unwrap();
    let out = edgecast(&[
        "ingest",
        "--input",
        raw.to_str().unwrap(),
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("rows 2 and 3"), "stderr: {err}");
}

#[test]
fn unknown_flag_exits_2() {
    let out = edgecast(&["ingest", "--bogus-flag", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_is_byte_deterministic_and_reports_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_synthetic(&data, 500, 3, 0.0);
    let config = dir.path().join("cfg.toml");
    fs::write(
        &config,
        "[model]\nhidden = 6\nwindow = 8\n\n[train]\nmax_epochs = 3\n",
    )
    .unwrap();

    let run = |out_path: &Path| {
        let out = edgecast(&[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "21",
            "--out-weights",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        stdout(&out)
    };
    let w1 = dir.path().join("w1.json");
    let w2 = dir.path().join("w2.json");
    let log1 = run(&w1);
    let log2 = run(&w2);
    assert_eq!(fs::read(&w1).unwrap(), fs::read(&w2).unwrap());
    assert_eq!(log1, log2);
    assert!(log1.contains("epoch=1 train_mse="));
    assert!(log1.contains("params="));

    // Validation loss on the smooth synthetic signal improves across epochs.
    let val_of = |line: &str| -> f64 {
        line.split_whitespace()
            .find_map(|tok| tok.strip_prefix("val_mse="))
            .unwrap()
            .parse()
            .unwrap()
    };
    let epoch_lines: Vec<&str> = log1.lines().filter(|l| l.starts_with("epoch=")).collect();
    assert!(epoch_lines.len() > 1);
    let first = val_of(epoch_lines.first().unwrap());
    let last = val_of(epoch_lines.last().unwrap());
    assert!(last < first, "val MSE did not improve: {first} -> {last}");
}

#[test]
fn run_constant_stream_transmits_once() {
    use edgecast::ingest::NormStats;
    use edgecast::predictor::{weights_to_json, LstmParams, ModelMeta, ModelWeights};

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("constant.csv");
    let mut csv = String::from("timestamp,value\n");
    for i in 0..200i64 {
        csv.push_str(&format!("{},21.5\n", Timestamp::from_unix(i * 3600)));
    }
    fs::write(&data, csv).unwrap();

    // A zero network always forecasts its stored mean, so on a stream pinned
    // to that mean only the flag-forced first sample goes out.
    let zero = ModelWeights::new(
        LstmParams::zeros(4, 1, 6),
        NormStats {
            mean: 21.5,
            std: 1.0,
        },
        ModelMeta {
            source_id: "const".into(),
            kind: SourceKind::InSitu,
            seed: 0,
        },
    )
    .unwrap();
    let weights = dir.path().join("zero.json");
    fs::write(&weights, weights_to_json(&zero).unwrap()).unwrap();

    let out = edgecast(&[
        "run",
        "--data",
        data.to_str().unwrap(),
        "--weights",
        weights.to_str().unwrap(),
        "--epsilon",
        "0.5",
        "--k",
        "6",
        "--out-log",
        dir.path().join("log.csv").to_str().unwrap(),
        "--out-recon",
        dir.path().join("recon.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("total=200 transmitted=1 reduction=99.50%"));
}

#[test]
fn train_rejects_bad_dropout_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_synthetic(&data, 300, 3, 0.0);
    let config = dir.path().join("cfg.toml");
    fs::write(&config, "[train]\ndropout = 1.0\n").unwrap();
    let out = edgecast(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "1",
        "--out-weights",
        dir.path().join("w.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dropout"));
}

#[test]
fn train_divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_synthetic(&data, 300, 3, 0.0);
    let config = dir.path().join("cfg.toml");
    fs::write(
        &config,
        "[model]\nhidden = 4\nwindow = 6\n\n[train]\nlr = 1e200\nmax_epochs = 10\ndropout = 0.0\n",
    )
    .unwrap();
    let out = edgecast(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "1",
        "--out-weights",
        dir.path().join("w.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("diverged"));
}

#[test]
fn run_summary_matches_log_and_reduction_formula() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_synthetic(&data, 400, 9, 0.0);
    let weights = train_small(dir.path(), &data);

    let log_path = dir.path().join("log.csv");
    let recon_path = dir.path().join("recon.csv");
    let out = edgecast(&[
        "run",
        "--data",
        data.to_str().unwrap(),
        "--weights",
        weights.to_str().unwrap(),
        "--epsilon",
        "0.5",
        "--k",
        "12",
        "--policy",
        "sliding",
        "--sync",
        "edge-actuals",
        "--out-log",
        log_path.to_str().unwrap(),
        "--out-recon",
        recon_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    // The printed summary must agree with the emitted log and the formula.
    let log_text = fs::read_to_string(&log_path).unwrap();
    let rows: Vec<&str> = log_text.lines().skip(1).collect();
    let total = rows.len() as u64;
    let transmitted = rows.iter().filter(|r| r.ends_with(",transmit")).count() as u64;
    let expected = round_half_up(data_reduction(total, transmitted).unwrap(), 2);
    let summary = stdout(&out);
    assert!(
        summary.contains(&format!(
            "total={total} transmitted={transmitted} reduction={expected:.2}%"
        )),
        "summary: {summary}"
    );
    let recon_text = fs::read_to_string(&recon_path).unwrap();
    assert_eq!(recon_text.lines().count() as u64, total + 1);
}

#[test]
fn run_rejects_zero_epsilon_and_window_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_synthetic(&data, 400, 9, 0.0);
    let weights = train_small(dir.path(), &data);

    let base = |eps: &str, k: &str| {
        edgecast(&[
            "run",
            "--data",
            data.to_str().unwrap(),
            "--weights",
            weights.to_str().unwrap(),
            "--epsilon",
            eps,
            "--k",
            k,
            "--out-log",
            dir.path().join("l.csv").to_str().unwrap(),
            "--out-recon",
            dir.path().join("r.csv").to_str().unwrap(),
        ])
    };
    let out = base("0", "12");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("epsilon"));

    let out = base("0.5", "24");
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("12") && err.contains("24"), "stderr: {err}");
}

fn scenario_toml(train_file: &str, test_file: &str) -> String {
    format!(
        r#"
[[scenario]]
name = "cross_site"
thresholds = [0.5, 1.0]

[scenario.train]
file = "{train_file}"
source_id = "A"
kind = "in_situ"

[scenario.test]
file = "{test_file}"
source_id = "B"
kind = "in_situ"

[scenario.filter]
k = 10
buffer_policy = "sliding"
sync_mode = "edge_actuals"

[scenario.model]
hidden = 6

[scenario.train_cfg]
max_epochs = 3
dropout = 0.0
seed = 5
"#
    )
}

#[test]
fn evaluate_then_report_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(&dir.path().join("a.csv"), 500, 31, 0.0);
    write_synthetic(&dir.path().join("b.csv"), 360, 32, 2.0);
    let spec_path = dir.path().join("scenarios.toml");
    fs::write(&spec_path, scenario_toml("a.csv", "b.csv")).unwrap();

    let reports = dir.path().join("reports.json");
    let out = edgecast(&[
        "evaluate",
        "--scenarios",
        spec_path.to_str().unwrap(),
        "--data-root",
        dir.path().to_str().unwrap(),
        "--out",
        reports.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("scenario cross_site A->B: ok"));

    let md = edgecast(&["report", "--in", reports.to_str().unwrap()]);
    assert_eq!(md.status.code(), Some(0));
    let md_text = stdout(&md);
    assert!(md_text.starts_with("| Source | Target | MAE |"));

    let csv = edgecast(&[
        "report",
        "--in",
        reports.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(csv.status.code(), Some(0));
    let csv_text = stdout(&csv);
    assert!(csv_text.starts_with("Source,Target,MAE,"));

    // Same numbers in both framings.
    let md_numbers: Vec<String> = md_text
        .split(['|', '\n'])
        .map(str::trim)
        .filter(|t| t.parse::<f64>().is_ok())
        .map(str::to_string)
        .collect();
    let csv_numbers: Vec<String> = csv_text
        .lines()
        .skip(1)
        .flat_map(|l| l.split(','))
        .filter(|t| t.parse::<f64>().is_ok())
        .map(str::to_string)
        .collect();
    assert_eq!(md_numbers, csv_numbers);
}

#[test]
fn evaluate_partial_failure_exits_4_but_writes_good_reports() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(&dir.path().join("a.csv"), 500, 31, 0.0);
    write_synthetic(&dir.path().join("b.csv"), 360, 32, 2.0);
    // Second scenario points at a file that does not exist.
    let mut text = scenario_toml("a.csv", "b.csv");
    text.push_str(&scenario_toml("a.csv", "missing.csv"));
    let spec_path = dir.path().join("scenarios.toml");
    fs::write(&spec_path, text).unwrap();

    let reports = dir.path().join("reports.json");
    let out = edgecast(&[
        "evaluate",
        "--scenarios",
        spec_path.to_str().unwrap(),
        "--data-root",
        dir.path().to_str().unwrap(),
        "--out",
        reports.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("1 of 2 scenarios failed"));

    let written: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&reports).unwrap()).unwrap();
    assert_eq!(written.as_array().unwrap().len(), 1);
}

#[test]
fn evaluate_rejects_invalid_spec_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("scenarios.toml");
    fs::write(&spec_path, "not valid toml [").unwrap();
    let out = edgecast(&[
        "evaluate",
        "--scenarios",
        spec_path.to_str().unwrap(),
        "--data-root",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
