//! Streams a day of readings through the edge filter and prints every
//! transmit/suppress decision.
//!
//! Run with: `cargo run --release --example edge_session`

use edgecast::eval::data_reduction;
use edgecast::filter::{run_session, BufferPolicy, Decision, FilterConfig, SyncMode};
use edgecast::ingest::{chrono_split, fit_norm, make_windows, SourceKind, Timestamp};
use edgecast::predictor::{init_params, train, ModelMeta, TrainConfig};
use edgecast::synth::{hourly_series, SyntheticSpec};

fn main() -> edgecast::Result<()> {
    let spec = SyntheticSpec::default();
    let start = Timestamp::parse("2021-01-01T00:00:00Z").unwrap();
    let year = hourly_series("field-7", SourceKind::InSitu, start, 2400, &spec, 9)?;

    // Train on the first stretch, stream the rest through the filter.
    let split = year.measurements[2000].timestamp;
    let history = year.slice(None, Some(split))?;
    let live = year.slice(Some(split), None)?;

    let stats = fit_norm(&history)?;
    let windows = make_windows(&history, 24, &stats)?;
    let cfg = TrainConfig {
        max_epochs: 12,
        dropout: 0.0,
        patience_stop: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let (train_set, val_set) = chrono_split(&windows, 1.0 - cfg.val_frac)?;
    let initial = init_params(32, 1, 24, cfg.seed)?;
    let meta = ModelMeta {
        source_id: "field-7".into(),
        kind: SourceKind::InSitu,
        seed: cfg.seed,
    };
    let (model, _) = train(initial, &train_set, &val_set, &cfg, stats, meta)?;

    let filter = FilterConfig {
        epsilon: 0.5,
        k: 24,
        buffer_policy: BufferPolicy::Sliding,
        sync_mode: SyncMode::Synchronized,
        ..FilterConfig::new(0.5, 24)
    };
    let (log, _) = run_session(&live, &model, &filter)?;

    println!(
        "{:<22} {:>9} {:>10} {:>8}  sent?",
        "timestamp", "actual", "forecast", "error"
    );
    println!("{}", "-".repeat(60));
    for entry in log.entries.iter().take(36) {
        let o = &entry.outcome;
        let forecast = o
            .predicted
            .map(|p| format!("{p:9.2}"))
            .unwrap_or_else(|| format!("{:>9}", "-"));
        let error = o
            .abs_error
            .map(|e| format!("{e:8.2}"))
            .unwrap_or_else(|| format!("{:>8}", "-"));
        let sent = match o.decision {
            Decision::Transmit => "->cloud",
            Decision::Suppress => "",
        };
        println!(
            "{:<22} {:>9.2} {} {}  {}",
            entry.timestamp.to_string(),
            o.actual,
            forecast,
            error,
            sent
        );
    }
    println!("{}", "-".repeat(60));
    println!(
        "session: {} samples, {} transmitted, {} suppressed",
        log.total(),
        log.transmitted(),
        log.suppressed()
    );
    println!(
        "data reduction at ε = {} °C: {:.2}%",
        filter.epsilon,
        data_reduction(log.total(), log.transmitted())?
    );
    Ok(())
}
