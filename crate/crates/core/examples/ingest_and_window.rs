//! Ingestion walkthrough: parse a raw CSV, downsample it, and cut it into
//! model-ready windows.
//!
//! Run with: `cargo run --example ingest_and_window`

use std::fs;

use edgecast::ingest::{fit_norm, make_windows, parse_csv, resample, CsvSchema, Timestamp};

fn main() -> edgecast::Result<()> {
    // A raw 10-minute feed with a renamed value column, one unparsable row,
    // and a missing reading in the third hour.
    let dir = std::env::temp_dir().join("edgecast-ingest-example");
    fs::create_dir_all(&dir).expect("temp dir");
    let raw_path = dir.join("station.csv");
    let start = Timestamp::parse("2021-06-01T00:00:00Z").unwrap();
    let mut csv = String::from("timestamp,temp_c\n");
    for i in 0..36i64 {
        if i == 14 {
            csv.push_str("2021-06-01T02:20:00Z,not-a-number\n");
            continue;
        }
        let ts = Timestamp::from_unix(start.unix() + i * 600);
        csv.push_str(&format!("{ts},{}\n", 18.0 + (i as f64 * 0.4).sin()));
    }
    fs::write(&raw_path, &csv).expect("write csv");

    let schema: CsvSchema = "value=temp_c".parse()?;
    let (frame, report) = parse_csv(&raw_path, &schema)?;
    println!("parsed {}: {report}", raw_path.display());
    println!(
        "resolution {}s, {} rows, {} gap(s)",
        frame.resolution,
        frame.len(),
        frame.gaps.len()
    );

    // Downsample to hourly means. The hour with the dropped reading has only
    // five of six points, so it becomes a gap instead of a biased average.
    let hourly = resample(&frame, 3600)?;
    println!("\nhourly frame: {} rows, gaps: {:?}", hourly.len(), hourly.gaps);
    for m in &hourly.measurements {
        println!("  {}  {:.3} °C", m.timestamp, m.value);
    }

    // Windows never straddle the gap, so this short frame yields just the
    // positions fully inside one gap-free run.
    let stats = fit_norm(&hourly)?;
    println!("\nnormalization: mean {:.3} °C, std {:.3} °C", stats.mean, stats.std);
    let windows = make_windows(&hourly, 2, &stats)?;
    println!("windows of length 2: {}", windows.len());
    for (input, target) in windows.inputs.iter().zip(&windows.targets) {
        let phys: Vec<String> = input
            .iter()
            .map(|&z| format!("{:.2}", stats.denormalize(z)))
            .collect();
        println!(
            "  [{}] -> {:.2}",
            phys.join(", "),
            stats.denormalize(*target)
        );
    }
    Ok(())
}
