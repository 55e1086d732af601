//! Time-series ingestion: CSV parsing, validation, resampling, windowing,
//! and normalization statistics.
//!
//! A [`SeriesFrame`] is the canonical in-memory form of a sensor stream:
//! strictly increasing timestamps on a fixed cadence, with missing intervals
//! recorded explicitly as [`Gap`]s rather than interpolated away. Windowing
//! never crosses a gap, and normalization statistics are always fitted on
//! training data only.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// UTC instant with one-second precision, stored as Unix seconds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub fn unix(self) -> i64 {
        self.0
    }

    /// Parses an ISO-8601 timestamp. Accepts RFC 3339 (`2021-01-01T00:00:00Z`,
    /// offsets allowed) as well as naive date-times with or without seconds,
    /// which are interpreted as UTC.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
            return Some(Timestamp(dt.timestamp()));
        }
        const NAIVE_FORMATS: [&str; 4] = [
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%d %H:%M:%S",
            "%Y-%m-%d %H:%M",
        ];
        for fmt in NAIVE_FORMATS {
            if let Ok(naive) = NaiveDateTime::parse_from_str(text, fmt) {
                return Some(Timestamp(naive.and_utc().timestamp()));
            }
        }
        None
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match Utc.timestamp_opt(self.0, 0).single() {
            Some(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%SZ")),
            None => write!(f, "@{}", self.0),
        }
    }
}

impl fmt::Debug for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Origin of a series: ground-station readings or satellite-derived gridded
/// values used as a training proxy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    InSitu,
    Satellite,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceKind::InSitu => write!(f, "in_situ"),
            SourceKind::Satellite => write!(f, "satellite"),
        }
    }
}

impl std::str::FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_situ" | "in-situ" => Ok(SourceKind::InSitu),
            "satellite" => Ok(SourceKind::Satellite),
            other => Err(Error::InvalidConfig(format!(
                "unknown source kind '{other}' (expected in_situ or satellite)"
            ))),
        }
    }
}

/// A single timestamped reading in degrees Celsius. Values are guaranteed
/// finite once past parsing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub timestamp: Timestamp,
    pub value: f64,
}

impl Measurement {
    pub fn new(timestamp: Timestamp, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "measurement value",
            });
        }
        Ok(Measurement { timestamp, value })
    }
}

/// A half-open `[start, end)` interval of missing steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: Timestamp,
    pub end: Timestamp,
}

/// A validated sensor stream: strictly increasing timestamps, every step an
/// exact multiple of `resolution`, and `gaps` recording exactly the missing
/// intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesFrame {
    pub source_id: String,
    pub kind: SourceKind,
    /// Sampling period in seconds.
    pub resolution: i64,
    pub measurements: Vec<Measurement>,
    pub gaps: Vec<Gap>,
}

impl SeriesFrame {
    /// Builds a frame from sorted measurements, checking the cadence
    /// invariants and deriving the gap list.
    pub fn new(
        source_id: impl Into<String>,
        kind: SourceKind,
        resolution: i64,
        measurements: Vec<Measurement>,
    ) -> Result<Self> {
        if resolution <= 0 {
            return Err(Error::InvalidConfig(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if measurements.iter().any(|m| !m.value.is_finite()) {
            return Err(Error::NonFinite {
                context: "measurement value",
            });
        }
        for pair in measurements.windows(2) {
            let delta = pair[1].timestamp.unix() - pair[0].timestamp.unix();
            if delta <= 0 {
                return Err(Error::InvalidConfig(format!(
                    "timestamps must be strictly increasing (at {})",
                    pair[1].timestamp
                )));
            }
            if delta % resolution != 0 {
                return Err(Error::IrregularCadence {
                    at: pair[1].timestamp,
                    delta,
                    resolution,
                });
            }
        }
        let gaps = compute_gaps(&measurements, resolution);
        Ok(SeriesFrame {
            source_id: source_id.into(),
            kind,
            resolution,
            measurements,
            gaps,
        })
    }

    /// Relabels the frame's identity without touching the data.
    pub fn with_identity(mut self, source_id: impl Into<String>, kind: SourceKind) -> Self {
        self.source_id = source_id.into();
        self.kind = kind;
        self
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.measurements.iter().map(|m| m.value)
    }

    /// Restricts the frame to measurements with `start <= t < end`.
    /// `None` bounds are open.
    pub fn slice(&self, start: Option<Timestamp>, end: Option<Timestamp>) -> Result<SeriesFrame> {
        let kept: Vec<Measurement> = self
            .measurements
            .iter()
            .filter(|m| {
                start.is_none_or(|s| m.timestamp >= s) && end.is_none_or(|e| m.timestamp < e)
            })
            .copied()
            .collect();
        SeriesFrame::new(self.source_id.clone(), self.kind, self.resolution, kept)
    }

    /// Canonical CSV form: `timestamp,value` header, ISO-8601 UTC stamps,
    /// shortest round-trip decimals, LF line endings.
    pub fn to_canonical_csv(&self) -> String {
        let mut out = String::from("timestamp,value\n");
        for m in &self.measurements {
            out.push_str(&format!("{},{}\n", m.timestamp, m.value));
        }
        out
    }

    /// Maximal runs of consecutive measurements (no gap inside a run),
    /// returned as index ranges into `measurements`.
    pub(crate) fn runs(&self) -> Vec<std::ops::Range<usize>> {
        let mut runs = Vec::new();
        let n = self.measurements.len();
        let mut start = 0;
        for i in 1..n {
            let delta =
                self.measurements[i].timestamp.unix() - self.measurements[i - 1].timestamp.unix();
            if delta != self.resolution {
                runs.push(start..i);
                start = i;
            }
        }
        if n > 0 {
            runs.push(start..n);
        }
        runs
    }
}

fn compute_gaps(measurements: &[Measurement], resolution: i64) -> Vec<Gap> {
    let mut gaps = Vec::new();
    for pair in measurements.windows(2) {
        let delta = pair[1].timestamp.unix() - pair[0].timestamp.unix();
        if delta > resolution {
            gaps.push(Gap {
                start: Timestamp::from_unix(pair[0].timestamp.unix() + resolution),
                end: pair[1].timestamp,
            });
        }
    }
    gaps
}

/// Column mapping for raw CSV input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub value_column: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp_column: "timestamp".into(),
            value_column: "value".into(),
        }
    }
}

impl std::str::FromStr for CsvSchema {
    type Err = Error;

    /// Parses `timestamp=<col>,value=<col>`; either key may be omitted.
    fn from_str(s: &str) -> Result<Self> {
        let mut schema = CsvSchema::default();
        for part in s.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            match part.split_once('=') {
                Some(("timestamp", col)) => schema.timestamp_column = col.trim().to_string(),
                Some(("value", col)) => schema.value_column = col.trim().to_string(),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "bad schema entry '{part}' (expected timestamp=<col>,value=<col>)"
                    )))
                }
            }
        }
        Ok(schema)
    }
}

/// Outcome counts from parsing one file. `rejected` includes unparsable rows,
/// non-finite values, and exact duplicates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub accepted: usize,
    pub rejected: usize,
    pub gaps: usize,
}

impl fmt::Display for ParseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accepted={} rejected={} gaps={}",
            self.accepted, self.rejected, self.gaps
        )
    }
}

/// Parses a CSV file into a validated frame.
///
/// Rows that fail to parse or carry non-finite values are dropped and counted
/// in the report. Exact duplicate rows are dropped; duplicate timestamps with
/// conflicting values are an error naming both row numbers. The sampling
/// resolution is inferred as the most common timestamp step; any step that is
/// not a multiple of it is an error.
///
/// The frame's `source_id` defaults to the file stem and `kind` to in-situ;
/// use [`SeriesFrame::with_identity`] to relabel.
pub fn parse_csv(path: &Path, schema: &CsvSchema) -> Result<(SeriesFrame, ParseReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e)),
            _ => Error::Csv {
                path: path.into(),
                source: e,
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?
        .clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.into(),
                column: name.to_string(),
            })
    };
    let ts_idx = col_index(&schema.timestamp_column)?;
    let val_idx = col_index(&schema.value_column)?;

    // (timestamp, value, 1-based data row number)
    let mut rows: Vec<(Timestamp, f64, usize)> = Vec::new();
    let mut rejected = 0usize;
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 2; // 1-based, after the header line
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                rejected += 1;
                continue;
            }
        };
        let ts = record.get(ts_idx).and_then(Timestamp::parse);
        let value = record
            .get(val_idx)
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite());
        match (ts, value) {
            (Some(ts), Some(value)) => rows.push((ts, value, row_no)),
            _ => rejected += 1,
        }
    }

    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp(&b.2)));
    let mut deduped: Vec<(Timestamp, f64, usize)> = Vec::with_capacity(rows.len());
    for row in rows {
        match deduped.last() {
            Some(prev) if prev.0 == row.0 => {
                if prev.1.to_bits() == row.1.to_bits() {
                    rejected += 1;
                } else {
                    return Err(Error::DuplicateConflict {
                        timestamp: row.0,
                        row_a: prev.2,
                        row_b: row.2,
                        value_a: prev.1,
                        value_b: row.1,
                    });
                }
            }
            _ => deduped.push(row),
        }
    }

    if deduped.is_empty() {
        return Err(Error::NoValidRows {
            path: path.into(),
            rejected,
        });
    }

    let resolution = infer_resolution(&deduped);
    let measurements = deduped
        .iter()
        .map(|&(ts, v, _)| Measurement {
            timestamp: ts,
            value: v,
        })
        .collect();
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".into());
    let frame = SeriesFrame::new(source_id, SourceKind::InSitu, resolution, measurements)?;
    let report = ParseReport {
        accepted: frame.len(),
        rejected,
        gaps: frame.gaps.len(),
    };
    Ok((frame, report))
}

/// Most common positive step; ties broken towards the smaller step. A single
/// row yields a nominal 1 s resolution.
fn infer_resolution(rows: &[(Timestamp, f64, usize)]) -> i64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for pair in rows.windows(2) {
        let delta = pair[1].0.unix() - pair[0].0.unix();
        *counts.entry(delta).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(delta, _)| delta)
        .unwrap_or(1)
}

/// Downsamples to a coarser resolution by averaging. Every output interval
/// must be fully covered by input points; intervals with any missing point
/// become gaps.
pub fn resample(frame: &SeriesFrame, target_resolution: i64) -> Result<SeriesFrame> {
    if target_resolution == frame.resolution {
        return Ok(frame.clone());
    }
    if target_resolution < frame.resolution {
        return Err(Error::Upsample {
            from: frame.resolution,
            to: target_resolution,
        });
    }
    if target_resolution % frame.resolution != 0 {
        return Err(Error::ResampleRatio {
            from: frame.resolution,
            to: target_resolution,
        });
    }
    let ratio = (target_resolution / frame.resolution) as usize;

    let mut out: Vec<Measurement> = Vec::new();
    let mut bucket_start: Option<i64> = None;
    let mut sum = 0.0;
    let mut count = 0usize;
    let flush = |start: Option<i64>, sum: f64, count: usize, out: &mut Vec<Measurement>| {
        if let Some(b) = start {
            if count == ratio {
                out.push(Measurement {
                    timestamp: Timestamp::from_unix(b),
                    value: sum / ratio as f64,
                });
            }
        }
    };
    for m in &frame.measurements {
        let b = m.timestamp.unix().div_euclid(target_resolution) * target_resolution;
        if bucket_start != Some(b) {
            flush(bucket_start, sum, count, &mut out);
            bucket_start = Some(b);
            sum = 0.0;
            count = 0;
        }
        sum += m.value;
        count += 1;
    }
    flush(bucket_start, sum, count, &mut out);

    SeriesFrame::new(
        frame.source_id.clone(),
        frame.kind,
        target_resolution,
        out,
    )
}

/// Z-score normalization statistics, fitted on training data only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    /// Population standard deviation; strictly positive.
    pub std: f64,
}

impl NormStats {
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !self.std.is_finite() {
            return Err(Error::NonFinite {
                context: "normalization statistics",
            });
        }
        if self.std <= 0.0 {
            return Err(Error::ConstantSeries);
        }
        Ok(())
    }
}

/// Mean and population standard deviation of all values in the frame.
/// A constant series (zero deviation) is an error.
pub fn fit_norm(frame: &SeriesFrame) -> Result<NormStats> {
    let n = frame.len();
    if n == 0 {
        return Err(Error::EmptyInput("cannot fit statistics on an empty frame"));
    }
    let mean = frame.values().sum::<f64>() / n as f64;
    let var = frame.values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return Err(Error::ConstantSeries);
    }
    Ok(NormStats { mean, std })
}

/// Normalized training pairs: each input is `k` consecutive values and the
/// target is the value immediately after. Windows never straddle a gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub k: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Slides a length-`k` window over every gap-free run of the frame,
/// normalizing inputs and targets with `stats`.
pub fn make_windows(frame: &SeriesFrame, k: usize, stats: &NormStats) -> Result<WindowSet> {
    if k == 0 {
        return Err(Error::InvalidConfig("window length must be at least 1".into()));
    }
    stats.validate()?;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for run in frame.runs() {
        let values = &frame.measurements[run];
        if values.len() < k + 1 {
            continue;
        }
        for start in 0..=(values.len() - k - 1) {
            let input: Vec<f64> = values[start..start + k]
                .iter()
                .map(|m| stats.normalize(m.value))
                .collect();
            inputs.push(input);
            targets.push(stats.normalize(values[start + k].value));
        }
    }
    if inputs.is_empty() {
        return Err(Error::NoWindows { needed: k + 1 });
    }
    Ok(WindowSet { inputs, targets, k })
}

/// Chronological split: the first `⌊train_frac·N⌋` windows go to the first
/// set, the remainder to the second. No shuffling.
pub fn chrono_split(set: &WindowSet, train_frac: f64) -> Result<(WindowSet, WindowSet)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must be in (0, 1), got {train_frac}"
        )));
    }
    let n = set.len();
    let n_train = ((train_frac * n as f64) + 1e-9).floor() as usize;
    if n_train == 0 {
        return Err(Error::EmptySplit { side: "first" });
    }
    if n_train >= n {
        return Err(Error::EmptySplit { side: "second" });
    }
    let first = WindowSet {
        inputs: set.inputs[..n_train].to_vec(),
        targets: set.targets[..n_train].to_vec(),
        k: set.k,
    };
    let second = WindowSet {
        inputs: set.inputs[n_train..].to_vec(),
        targets: set.targets[n_train..].to_vec(),
        k: set.k,
    };
    Ok((first, second))
}
