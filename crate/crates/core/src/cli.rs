//! Command-line surface binding ingestion, training, filtering, and
//! evaluation into reproducible runs.
//!
//! Exit codes are a stable scripting contract: 0 success, 2 input or
//! validation error, 3 numerical failure (training divergence), 4 partial
//! scenario failure (some scenarios ran, at least one did not). Seeds are
//! mandatory wherever randomness is involved; nothing falls back to the
//! wall clock.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    data_reduction, render_table, round_half_up, run_scenario, ScenarioReport, ScenarioSuite,
    TableFormat,
};
use crate::filter::{run_session, BufferPolicy, FilterConfig, PadPolicy, SyncMode};
use crate::fsio::write_atomic;
use crate::ingest::{
    chrono_split, fit_norm, make_windows, parse_csv, resample, CsvSchema, SourceKind,
};
use crate::predictor::{init_params, load_weights, save_weights, train, ModelMeta, TrainConfig};

#[derive(Parser)]
#[command(
    name = "edgecast",
    about = "Predictive edge filtering and cloud reconstruction for sensor streams",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a raw CSV series into canonical form.
    Ingest {
        /// Raw input CSV.
        #[arg(long)]
        input: PathBuf,
        /// Column mapping, e.g. `timestamp=time,value=temp`.
        #[arg(long)]
        schema: Option<String>,
        /// Downsample to this resolution in seconds (mean aggregation).
        #[arg(long)]
        resample: Option<i64>,
        /// Canonical CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a forecaster on a canonical CSV series.
    Train {
        /// Canonical training CSV (`timestamp,value`).
        #[arg(long)]
        data: PathBuf,
        /// TOML file with `[model]` and `[train]` sections; defaults apply
        /// to anything omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed for initialization, shuffling, and dropout.
        #[arg(long)]
        seed: u64,
        /// Where to write the weight file.
        #[arg(long)]
        out_weights: PathBuf,
        /// Optional JSON training report.
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Station identifier recorded in the weight file.
        #[arg(long)]
        source_id: Option<String>,
        /// Data kind recorded in the weight file: in_situ or satellite.
        #[arg(long, default_value = "in_situ")]
        kind: String,
    },
    /// Run an edge/cloud filter session over a series.
    Run {
        /// Canonical CSV to stream through the filter.
        #[arg(long)]
        data: PathBuf,
        /// Weight file produced by `train`.
        #[arg(long)]
        weights: PathBuf,
        /// Error tolerance in °C.
        #[arg(long)]
        epsilon: f64,
        /// Buffer window length; must match the model window.
        #[arg(long)]
        k: usize,
        /// Buffer policy on transmission.
        #[arg(long, value_enum, default_value_t = PolicyArg::ResetOnTransmit)]
        policy: PolicyArg,
        /// What the edge buffers on suppression.
        #[arg(long, value_enum, default_value_t = SyncArg::Synchronized)]
        sync: SyncArg,
        /// Transmission log CSV output.
        #[arg(long)]
        out_log: PathBuf,
        /// Reconstructed series CSV output.
        #[arg(long)]
        out_recon: PathBuf,
    },
    /// Run every scenario in a spec file and write the reports as JSON.
    Evaluate {
        /// Scenario spec file (TOML, one `[[scenario]]` per experiment).
        #[arg(long)]
        scenarios: PathBuf,
        /// Directory data file paths are resolved against; also hosts the
        /// weight cache.
        #[arg(long)]
        data_root: PathBuf,
        /// Where to write the JSON report array.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render evaluation reports as a table.
    Report {
        /// JSON report array produced by `evaluate`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output format.
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    ResetOnTransmit,
    Sliding,
}

impl From<PolicyArg> for BufferPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::ResetOnTransmit => BufferPolicy::ResetOnTransmit,
            PolicyArg::Sliding => BufferPolicy::Sliding,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SyncArg {
    Synchronized,
    EdgeActuals,
}

impl From<SyncArg> for SyncMode {
    fn from(s: SyncArg) -> Self {
        match s {
            SyncArg::Synchronized => SyncMode::Synchronized,
            SyncArg::EdgeActuals => SyncMode::EdgeActuals,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

impl From<FormatArg> for TableFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => TableFormat::Markdown,
            FormatArg::Csv => TableFormat::Csv,
        }
    }
}

/// Training file: architecture plus hyperparameters, everything optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainFileConfig {
    model: ModelSection,
    train: TrainConfig,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
struct ModelSection {
    hidden: usize,
    window: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: 64,
            window: 24,
        }
    }
}

/// Parses arguments from the process environment and runs one command,
/// returning the process exit code. Unknown flags abort with code 2 before
/// any work happens.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; everything else is a
            // usage error (code 2).
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Ingest {
            input,
            schema,
            resample: target,
            out,
        } => cmd_ingest(&input, schema.as_deref(), target, &out),
        Cmd::Train {
            data,
            config,
            seed,
            out_weights,
            out_report,
            source_id,
            kind,
        } => cmd_train(
            &data,
            config.as_deref(),
            seed,
            &out_weights,
            out_report.as_deref(),
            source_id,
            &kind,
        ),
        Cmd::Run {
            data,
            weights,
            epsilon,
            k,
            policy,
            sync,
            out_log,
            out_recon,
        } => cmd_run(
            &data, &weights, epsilon, k, policy.into(), sync.into(), &out_log, &out_recon,
        ),
        Cmd::Evaluate {
            scenarios,
            data_root,
            out,
        } => cmd_evaluate(&scenarios, &data_root, &out),
        Cmd::Report { input, format } => cmd_report(&input, format.into()),
    }
}

fn cmd_ingest(
    input: &Path,
    schema: Option<&str>,
    target: Option<i64>,
    out: &Path,
) -> Result<i32> {
    let schema: CsvSchema = match schema {
        Some(s) => s.parse()?,
        None => CsvSchema::default(),
    };
    let (frame, report) = parse_csv(input, &schema)?;
    let frame = match target {
        Some(t) => resample(&frame, t)?,
        None => frame,
    };
    write_atomic(out, frame.to_canonical_csv().as_bytes())?;
    eprintln!("parse: {report}");
    Ok(0)
}

fn cmd_train(
    data: &Path,
    config: Option<&Path>,
    seed: u64,
    out_weights: &Path,
    out_report: Option<&Path>,
    source_id: Option<String>,
    kind: &str,
) -> Result<i32> {
    let file_cfg: TrainFileConfig = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| Error::Toml {
                path: path.into(),
                message: e.to_string(),
            })?
        }
        None => TrainFileConfig::default(),
    };
    let mut train_cfg = file_cfg.train;
    train_cfg.seed = seed;
    train_cfg.validate()?;
    let kind: SourceKind = kind.parse()?;

    let (frame, parse_report) = parse_csv(data, &CsvSchema::default())?;
    eprintln!("parse: {parse_report}");
    let stats = fit_norm(&frame)?;
    let windows = make_windows(&frame, file_cfg.model.window, &stats)?;
    let (train_set, val_set) = chrono_split(&windows, 1.0 - train_cfg.val_frac)?;

    let initial = init_params(file_cfg.model.hidden, 1, file_cfg.model.window, seed)?;
    println!(
        "model: hidden={} window={} params={}",
        file_cfg.model.hidden,
        file_cfg.model.window,
        initial.param_count()
    );
    let meta = ModelMeta {
        source_id: source_id.unwrap_or_else(|| frame.source_id.clone()),
        kind,
        seed,
    };
    let (weights, report) = match train(initial, &train_set, &val_set, &train_cfg, stats, meta) {
        Ok(r) => r,
        Err(Error::Divergence { epoch, report }) => {
            for e in &report.epochs {
                println!(
                    "epoch={} train_mse={} val_mse={} lr={}",
                    e.epoch, e.train_mse, e.val_mse, e.lr
                );
            }
            return Err(Error::Divergence { epoch, report });
        }
        Err(e) => return Err(e),
    };
    for e in &report.epochs {
        println!(
            "epoch={} train_mse={} val_mse={} lr={}",
            e.epoch, e.train_mse, e.val_mse, e.lr
        );
    }
    println!(
        "best: epoch={} val_mse={}",
        report.best_epoch, report.best_val_mse
    );
    save_weights(&weights, out_weights)?;
    if let Some(path) = out_report {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    data: &Path,
    weights_path: &Path,
    epsilon: f64,
    k: usize,
    policy: BufferPolicy,
    sync: SyncMode,
    out_log: &Path,
    out_recon: &Path,
) -> Result<i32> {
    let weights = load_weights(weights_path)?;
    let cfg = FilterConfig {
        epsilon,
        k,
        buffer_policy: policy,
        sync_mode: sync,
        pad_policy: PadPolicy::ReplicateOldest,
    };
    cfg.validate()?;
    if weights.params.window != k {
        return Err(Error::WindowMismatch {
            model: weights.params.window,
            configured: k,
        });
    }
    let (frame, _) = parse_csv(data, &CsvSchema::default())?;
    let (log, recon) = run_session(&frame, &weights, &cfg)?;
    write_atomic(out_log, log.to_csv().as_bytes())?;
    write_atomic(out_recon, recon.to_csv().as_bytes())?;
    let reduction = data_reduction(log.total(), log.transmitted())?;
    println!(
        "total={} transmitted={} reduction={:.2}%",
        log.total(),
        log.transmitted(),
        round_half_up(reduction, 2)
    );
    Ok(0)
}

fn cmd_evaluate(scenarios: &Path, data_root: &Path, out: &Path) -> Result<i32> {
    let suite = ScenarioSuite::from_toml_path(scenarios)?;
    if suite.scenarios.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no scenarios found in {}",
            scenarios.display()
        )));
    }
    for spec in &suite.scenarios {
        spec.validate()?;
    }

    let mut reports: Vec<ScenarioReport> = Vec::new();
    let mut failures: Vec<(String, Error)> = Vec::new();
    for spec in &suite.scenarios {
        match run_scenario(spec, data_root) {
            Ok(report) => {
                let first = &report.per_threshold[0];
                println!(
                    "scenario {}: ok mae={} total={} transmitted={} reduction={:.2}%",
                    spec.label(),
                    round_half_up(report.mae, 3),
                    first.metrics.total,
                    first.metrics.transmitted,
                    round_half_up(first.metrics.reduction_pct, 2)
                );
                reports.push(report);
            }
            Err(e) => {
                eprintln!("scenario {}: FAILED: {e}", spec.label());
                failures.push((spec.label(), e));
            }
        }
    }
    let mut text = serde_json::to_string_pretty(&reports)?;
    text.push('\n');
    write_atomic(out, text.as_bytes())?;
    if failures.is_empty() {
        Ok(0)
    } else {
        eprintln!(
            "{} of {} scenarios failed: {}",
            failures.len(),
            suite.scenarios.len(),
            failures
                .iter()
                .map(|(n, _)| n.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
        Ok(4)
    }
}

fn cmd_report(input: &Path, format: TableFormat) -> Result<i32> {
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let reports: Vec<ScenarioReport> = serde_json::from_str(&text)?;
    print!("{}", render_table(&reports, format)?);
    Ok(0)
}
