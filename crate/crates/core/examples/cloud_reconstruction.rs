//! Shows the cloud rebuilding the full stream from sparse transmissions, and
//! why the synchronization mode decides whether the error is bounded.
//!
//! In synchronized mode the edge buffers its own forecast whenever it
//! suppresses, so the cloud mirror stays bit-identical and every
//! reconstructed value is within ε of the truth. If the edge buffers the
//! actual readings instead (`EdgeActuals`), its private buffer diverges from
//! the mirror and the reconstruction error can exceed ε.
//!
//! Run with: `cargo run --release --example cloud_reconstruction`

use edgecast::filter::{run_session, BufferPolicy, FilterConfig, PadPolicy, SyncMode};
use edgecast::ingest::{chrono_split, fit_norm, make_windows, SourceKind, Timestamp};
use edgecast::predictor::{init_params, train, ModelMeta, TrainConfig};
use edgecast::synth::{hourly_series, SyntheticSpec};

fn main() -> edgecast::Result<()> {
    let spec = SyntheticSpec::default();
    let start = Timestamp::parse("2021-01-01T00:00:00Z").unwrap();
    let year = hourly_series("alpine-3", SourceKind::InSitu, start, 2400, &spec, 17)?;
    let split = year.measurements[2000].timestamp;
    let history = year.slice(None, Some(split))?;
    let live = year.slice(Some(split), None)?;

    let stats = fit_norm(&history)?;
    let windows = make_windows(&history, 24, &stats)?;
    let cfg = TrainConfig {
        max_epochs: 12,
        dropout: 0.0,
        patience_stop: 4,
        seed: 17,
        ..TrainConfig::default()
    };
    let (train_set, val_set) = chrono_split(&windows, 1.0 - cfg.val_frac)?;
    let initial = init_params(32, 1, 24, cfg.seed)?;
    let meta = ModelMeta {
        source_id: "alpine-3".into(),
        kind: SourceKind::InSitu,
        seed: cfg.seed,
    };
    let (model, _) = train(initial, &train_set, &val_set, &cfg, stats, meta)?;

    let epsilon = 0.5;
    for sync in [SyncMode::Synchronized, SyncMode::EdgeActuals] {
        let filter = FilterConfig {
            epsilon,
            k: 24,
            buffer_policy: BufferPolicy::Sliding,
            sync_mode: sync,
            pad_policy: PadPolicy::ReplicateOldest,
        };
        let (log, recon) = run_session(&live, &model, &filter)?;

        let mut sup_error = 0.0f64;
        let mut filled = 0usize;
        for (entry, point) in log.entries.iter().zip(&recon.points) {
            if point.is_prediction {
                filled += 1;
                sup_error = sup_error.max((point.value - entry.outcome.actual).abs());
            } else {
                assert_eq!(point.value.to_bits(), entry.outcome.actual.to_bits());
            }
        }
        println!("mode {sync:?}:");
        println!(
            "  {} of {} samples transmitted; cloud filled in {} forecasts",
            log.transmitted(),
            log.total(),
            filled
        );
        println!(
            "  worst reconstruction error {:.3} °C (ε = {epsilon}) {}",
            sup_error,
            if sup_error <= epsilon {
                "— within the bound"
            } else {
                "— bound does not hold in this mode"
            }
        );
    }
    Ok(())
}
