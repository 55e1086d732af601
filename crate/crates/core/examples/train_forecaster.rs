//! Trains the one-step-ahead forecaster on a synthetic temperature year and
//! saves a portable, self-contained weight file.
//!
//! Run with: `cargo run --release --example train_forecaster`

use edgecast::ingest::{chrono_split, fit_norm, make_windows, SourceKind, Timestamp};
use edgecast::predictor::{
    forward, init_params, load_weights, save_weights, train, ModelMeta, TrainConfig,
};
use edgecast::synth::{hourly_series, SyntheticSpec};

fn main() -> edgecast::Result<()> {
    let spec = SyntheticSpec::default();
    let start = Timestamp::parse("2021-01-01T00:00:00Z").unwrap();
    let frame = hourly_series("demo-site", SourceKind::InSitu, start, 3000, &spec, 42)?;

    // Normalization statistics come from the data the model trains on; they
    // travel inside the weight file so inference needs nothing else.
    let stats = fit_norm(&frame)?;
    let windows = make_windows(&frame, 24, &stats)?;
    println!("{} windows of 24 hourly values", windows.len());

    let cfg = TrainConfig {
        max_epochs: 15,
        dropout: 0.1,
        patience_stop: 5,
        patience_decay: 3,
        seed: 42,
        ..TrainConfig::default()
    };
    let (train_set, val_set) = chrono_split(&windows, 1.0 - cfg.val_frac)?;
    let initial = init_params(32, 1, 24, cfg.seed)?;
    println!(
        "architecture: 32 hidden units, window 24, {} parameters",
        initial.param_count()
    );

    let meta = ModelMeta {
        source_id: "demo-site".into(),
        kind: SourceKind::InSitu,
        seed: cfg.seed,
    };
    let (weights, report) = train(initial, &train_set, &val_set, &cfg, stats, meta)?;
    for e in &report.epochs {
        println!(
            "epoch {:>2}: train MSE {:.5}  val MSE {:.5}  lr {}",
            e.epoch, e.train_mse, e.val_mse, e.lr
        );
    }
    println!(
        "kept epoch {} (val MSE {:.5})",
        report.best_epoch, report.best_val_mse
    );

    // Round trip through disk; forecasts are bit-identical afterwards.
    let path = std::env::temp_dir().join("edgecast-demo-weights.json");
    save_weights(&weights, &path)?;
    let reloaded = load_weights(&path)?;
    let window: Vec<f64> = frame.measurements[100..124]
        .iter()
        .map(|m| weights.norm.normalize(m.value))
        .collect();
    let a = forward(&window, &weights)?;
    let b = forward(&window, &reloaded)?;
    assert_eq!(a.to_bits(), b.to_bits());
    println!("\nsaved {} and reloaded it: forecast {a:.3} °C (bit-identical)", path.display());
    println!("next actual was {:.3} °C", frame.measurements[124].value);
    Ok(())
}
