//! Metrics and reporting: data-reduction percentage, mean absolute error,
//! the scenario runner, and table rendering.

mod scenario;

pub use scenario::{
    run_scenario, ArchSettings, DataSelector, FilterSettings, Provenance, ScenarioKind,
    ScenarioReport, ScenarioSpec, ScenarioSuite, ThresholdMetrics,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::TransmissionLog;

/// Share of samples never transmitted: `(1 − transmitted/total) × 100`.
pub fn data_reduction(total: u64, transmitted: u64) -> Result<f64> {
    if total == 0 {
        return Err(Error::EmptyInput("data reduction requires total > 0"));
    }
    if transmitted > total {
        return Err(Error::InvalidConfig(format!(
            "transmitted ({transmitted}) cannot exceed total ({total})"
        )));
    }
    Ok((1.0 - transmitted as f64 / total as f64) * 100.0)
}

/// Mean absolute difference between predictions and ground truth.
pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(Error::EmptyInput(
            "MAE requires equal-length, nonempty series",
        ));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Per-threshold session results in the result-table schema.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: u64,
    /// Samples suppressed because the forecast was within tolerance.
    pub correct: u64,
    pub transmitted: u64,
    pub reduction_pct: f64,
    /// In-loop MAE over all steps that carried a prediction; flag-forced
    /// transmissions have none and are excluded.
    pub mae: f64,
}

impl Metrics {
    pub fn from_log(log: &TransmissionLog) -> Result<Metrics> {
        let total = log.total();
        let transmitted = log.transmitted();
        let (preds, actuals) = log.predicted_pairs();
        Ok(Metrics {
            total,
            correct: total - transmitted,
            transmitted,
            reduction_pct: data_reduction(total, transmitted)?,
            mae: mae(&preds, &actuals)?,
        })
    }
}

/// Half-up decimal rounding at `decimals` places.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    if x >= 0.0 {
        (x * scale + 0.5).floor() / scale
    } else {
        (x * scale - 0.5).ceil() / scale
    }
}

fn fmt_fixed(x: f64, decimals: u32) -> String {
    format!("{:.*}", decimals as usize, round_half_up(x, decimals))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            other => Err(Error::InvalidConfig(format!(
                "unknown table format '{other}' (expected markdown or csv)"
            ))),
        }
    }
}

/// Renders scenario reports as one row per scenario: source/target identity,
/// MAE (3 decimals), then Total/Correct/Transmitted/Reduction (2 decimals)
/// per threshold. Thresholds are taken from the first report; every report
/// must carry the same set.
pub fn render_table(reports: &[ScenarioReport], format: TableFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no reports to render"));
    }
    let thresholds: Vec<f64> = reports[0]
        .per_threshold
        .iter()
        .map(|t| t.epsilon)
        .collect();
    for r in reports {
        let got: Vec<f64> = r.per_threshold.iter().map(|t| t.epsilon).collect();
        if got != thresholds {
            return Err(Error::InvalidConfig(
                "all reports in one table must share the same thresholds".into(),
            ));
        }
    }
    let cross_site = reports
        .iter()
        .any(|r| r.spec.train.source_id != r.spec.test.source_id);

    let mut header: Vec<String> = if cross_site {
        vec!["Source".into(), "Target".into()]
    } else {
        vec!["Location".into()]
    };
    header.push("MAE".into());
    for eps in &thresholds {
        let tag = format!("{eps}");
        header.push(format!("Total ({tag})"));
        header.push(format!("Correct ({tag})"));
        header.push(format!("Transmitted ({tag})"));
        header.push(format!("Reduction % ({tag})"));
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for r in reports {
        let mut row = if cross_site {
            vec![r.spec.train.source_id.clone(), r.spec.test.source_id.clone()]
        } else {
            vec![r.spec.test.source_id.clone()]
        };
        row.push(fmt_fixed(r.mae, 3));
        for t in &r.per_threshold {
            row.push(t.metrics.total.to_string());
            row.push(t.metrics.correct.to_string());
            row.push(t.metrics.transmitted.to_string());
            row.push(fmt_fixed(t.metrics.reduction_pct, 2));
        }
        rows.push(row);
    }

    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            out.push_str(&format!(
                "|{}\n",
                " --- |".repeat(header.len())
            ));
            for row in rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reduction_reference_points() {
        // Reference count/percentage pairs; agreement is checked at the
        // printed 2-decimal precision.
        assert!((round_half_up(data_reduction(52535, 6810).unwrap(), 2) - 87.04).abs() < 1e-9);
        assert!((round_half_up(data_reduction(8735, 676).unwrap(), 2) - 92.26).abs() < 1e-9);
        assert!((round_half_up(data_reduction(52535, 3126).unwrap(), 2) - 94.05).abs() < 1e-9);
        assert!((round_half_up(data_reduction(8735, 3666).unwrap(), 2) - 58.03).abs() < 1e-9);
    }

    #[test]
    fn reduction_boundaries() {
        assert_eq!(data_reduction(100, 0).unwrap(), 100.0);
        assert_eq!(data_reduction(100, 100).unwrap(), 0.0);
        assert!(data_reduction(0, 0).is_err());
        assert!(data_reduction(10, 11).is_err());
    }

    #[test]
    fn mae_hand_values() {
        assert_eq!(mae(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let m = mae(&[1.0, 2.0, 3.0], &[1.0, 1.0, 4.0]).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
        // |·| is symmetric in its arguments.
        let swapped = mae(&[1.0, 1.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, swapped);
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        // Exactly-representable ties distinguish half-up from half-even.
        assert_eq!(round_half_up(0.125, 2), 0.13);
        assert_eq!(round_half_up(-0.125, 2), -0.13);
        assert_eq!(round_half_up(2.5, 0), 3.0);
        assert_eq!(round_half_up(87.0352766, 2), 87.04);
        assert_eq!(round_half_up(0.26449, 3), 0.264);
        assert_eq!(fmt_fixed(0.264, 3), "0.264");
        assert_eq!(fmt_fixed(87.0352766, 2), "87.04");
    }

    proptest! {
        #[test]
        fn reduction_identity_with_correct_count(total in 1u64..100_000, frac in 0.0f64..=1.0) {
            let transmitted = ((total as f64) * frac) as u64;
            let correct = total - transmitted;
            let via_eq = data_reduction(total, transmitted).unwrap();
            let via_correct = 100.0 * correct as f64 / total as f64;
            prop_assert!((via_eq - via_correct).abs() < 0.005);
        }

        #[test]
        fn mae_triangle_inequality(
            a in proptest::collection::vec(-50.0f64..50.0, 1..40),
            deltas in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40),
        ) {
            let n = a.len().min(deltas.len());
            let a = &a[..n];
            let b: Vec<f64> = a.iter().zip(&deltas[..n]).map(|(x, d)| x + d.0).collect();
            let c: Vec<f64> = a.iter().zip(&deltas[..n]).map(|(x, d)| x + d.1).collect();
            let ac = mae(a, &c).unwrap();
            let ab = mae(a, &b).unwrap();
            let bc = mae(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(ac >= 0.0);
        }
    }
}
