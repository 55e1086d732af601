//! Edge-side transmit/suppress decisions and cloud-side stream
//! reconstruction.
//!
//! The edge holds a rolling buffer `B` of recent values and a transmit flag.
//! The first sample of a session (and the first after any gap) is always
//! transmitted. Afterwards each reading is compared against the model's
//! forecast from the buffer: readings whose absolute error exceeds the
//! tolerance `ε` are transmitted, everything else is suppressed. The cloud
//! runs a mirror of the same state machine with the same model; at suppressed
//! positions it substitutes its own forecast for the missing reading.
//!
//! Two semantic knobs are explicit because they decide what can be proven:
//!
//! - [`BufferPolicy`]: on transmission the buffer either collapses to just
//!   the transmitted value (`ResetOnTransmit`) or keeps sliding
//!   (`Sliding`). Sliding together with actual-value feedback makes buffer
//!   contents independent of past decisions, which is what makes the set of
//!   transmitted indices monotone in the tolerance.
//! - [`SyncMode`]: on suppression the edge appends either its own forecast
//!   (`Synchronized`) or the actual reading (`EdgeActuals`). Only the
//!   synchronized mode keeps edge and cloud buffers bit-identical, which in
//!   turn bounds the reconstruction error by ε at every suppressed sample.
//!   With `EdgeActuals` the edge buffers readings the cloud never sees, the
//!   mirrors drift apart, and no reconstruction bound holds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{SeriesFrame, Timestamp};
use crate::predictor::Predictor;

/// Buffer behavior on a transmitted sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferPolicy {
    /// Collapse the buffer to the transmitted value.
    ResetOnTransmit,
    /// Always append and keep the last `k` values, regardless of decision.
    Sliding,
}

/// Which value the edge appends to its buffer on a suppressed sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Append the forecast. The cloud mirror reproduces it exactly, so both
    /// sides stay bit-identical and the ε reconstruction bound holds.
    Synchronized,
    /// Append the actual reading. Closer to a standalone edge device, but
    /// the cloud cannot follow and reconstruction error is unbounded.
    EdgeActuals,
}

/// How a short buffer is grown to the model's window length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadPolicy {
    /// Left-pad by repeating the oldest value.
    ReplicateOldest,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Error tolerance in °C; strictly positive.
    pub epsilon: f64,
    /// Buffer window length; must equal the model's input window.
    pub k: usize,
    pub buffer_policy: BufferPolicy,
    pub sync_mode: SyncMode,
    pub pad_policy: PadPolicy,
}

impl FilterConfig {
    pub fn new(epsilon: f64, k: usize) -> Self {
        FilterConfig {
            epsilon,
            k,
            buffer_policy: BufferPolicy::ResetOnTransmit,
            sync_mode: SyncMode::Synchronized,
            pad_policy: PadPolicy::ReplicateOldest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("buffer size k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mutable per-session state: the rolling buffer and the transmit flag.
/// Fresh state has an empty buffer and the flag raised, so the first sample
/// is always transmitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub buffer: Vec<f64>,
    pub transmit_flag: bool,
}

impl FilterState {
    pub fn new() -> Self {
        FilterState {
            buffer: Vec::new(),
            transmit_flag: true,
        }
    }
}

impl Default for FilterState {
    fn default() -> Self {
        FilterState::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Transmit,
    Suppress,
}

/// What happened at one step. Flag-forced transmissions carry no prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub decision: Decision,
    pub actual: f64,
    pub predicted: Option<f64>,
    pub abs_error: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp: Timestamp,
    pub outcome: StepOutcome,
}

/// Ordered record of every decision in a session.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransmissionLog {
    pub entries: Vec<LogEntry>,
}

impl TransmissionLog {
    pub fn total(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn transmitted(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.outcome.decision == Decision::Transmit)
            .count() as u64
    }

    pub fn suppressed(&self) -> u64 {
        self.total() - self.transmitted()
    }

    /// `(predicted, actual)` pairs for every step that has a prediction.
    pub fn predicted_pairs(&self) -> (Vec<f64>, Vec<f64>) {
        let mut preds = Vec::new();
        let mut actuals = Vec::new();
        for e in &self.entries {
            if let Some(p) = e.outcome.predicted {
                preds.push(p);
                actuals.push(e.outcome.actual);
            }
        }
        (preds, actuals)
    }

    /// CSV export: `index,timestamp,actual,predicted,abs_error,decision`,
    /// LF line endings, `.` decimal separator, shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,timestamp,actual,predicted,abs_error,decision\n");
        for (i, e) in self.entries.iter().enumerate() {
            let predicted = e.outcome.predicted.map(fmt_f64).unwrap_or_default();
            let abs_error = e.outcome.abs_error.map(fmt_f64).unwrap_or_default();
            let decision = match e.outcome.decision {
                Decision::Transmit => "transmit",
                Decision::Suppress => "suppress",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i,
                e.timestamp,
                fmt_f64(e.outcome.actual),
                predicted,
                abs_error,
                decision
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconPoint {
    pub timestamp: Timestamp,
    pub value: f64,
    /// True where the cloud filled in its own forecast.
    pub is_prediction: bool,
}

/// The cloud's view of the stream: transmitted actuals where available,
/// model forecasts everywhere else.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedSeries {
    pub points: Vec<ReconPoint>,
}

impl ReconstructedSeries {
    /// CSV export: `timestamp,value,is_prediction`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,value,is_prediction\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                p.timestamp,
                fmt_f64(p.value),
                p.is_prediction
            ));
        }
        out
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Grows `buffer` to exactly `k` values for the model: the last `k` values
/// if enough are present, otherwise left-padded by repeating the oldest.
pub fn pad_buffer(buffer: &[f64], k: usize, policy: PadPolicy) -> Result<Vec<f64>> {
    let first = *buffer.first().ok_or(Error::EmptyBuffer)?;
    match policy {
        PadPolicy::ReplicateOldest => {
            if buffer.len() >= k {
                Ok(buffer[buffer.len() - k..].to_vec())
            } else {
                let mut padded = vec![first; k - buffer.len()];
                padded.extend_from_slice(buffer);
                Ok(padded)
            }
        }
    }
}

fn push_truncate(buffer: &mut Vec<f64>, value: f64, k: usize) {
    buffer.push(value);
    if buffer.len() > k {
        let excess = buffer.len() - k;
        buffer.drain(..excess);
    }
}

fn apply_transmit(buffer: &mut Vec<f64>, x: f64, cfg: &FilterConfig) {
    match cfg.buffer_policy {
        BufferPolicy::ResetOnTransmit => {
            buffer.clear();
            buffer.push(x);
        }
        BufferPolicy::Sliding => push_truncate(buffer, x, cfg.k),
    }
}

fn apply_suppress(buffer: &mut Vec<f64>, value: f64, cfg: &FilterConfig) {
    push_truncate(buffer, value, cfg.k);
}

/// One edge decision. Returns the outcome and the successor state.
///
/// If the transmit flag is raised the sample is sent unconditionally and no
/// prediction is made. Otherwise the model forecasts from the padded buffer
/// and the sample is transmitted exactly when `|x − x̂| > ε` (ties are
/// suppressed). The buffer update follows the configured policies; in
/// synchronized mode a suppressed step appends the forecast rather than the
/// reading, so the cloud can replay it.
pub fn edge_step(
    state: &FilterState,
    x: f64,
    model: &dyn Predictor,
    cfg: &FilterConfig,
) -> Result<(StepOutcome, FilterState)> {
    cfg.validate()?;
    if !x.is_finite() {
        return Err(Error::NonFinite {
            context: "edge measurement",
        });
    }
    if model.window_len() != cfg.k {
        return Err(Error::WindowMismatch {
            model: model.window_len(),
            configured: cfg.k,
        });
    }

    let mut next = state.clone();
    if state.transmit_flag {
        apply_transmit(&mut next.buffer, x, cfg);
        next.transmit_flag = false;
        return Ok((
            StepOutcome {
                decision: Decision::Transmit,
                actual: x,
                predicted: None,
                abs_error: None,
            },
            next,
        ));
    }

    let padded = pad_buffer(&state.buffer, cfg.k, cfg.pad_policy)?;
    let predicted = model.predict(&padded)?;
    if !predicted.is_finite() {
        return Err(Error::NonFinite {
            context: "edge prediction",
        });
    }
    let abs_error = (x - predicted).abs();
    let decision = if abs_error > cfg.epsilon {
        apply_transmit(&mut next.buffer, x, cfg);
        Decision::Transmit
    } else {
        let kept = match cfg.sync_mode {
            SyncMode::Synchronized => predicted,
            SyncMode::EdgeActuals => x,
        };
        apply_suppress(&mut next.buffer, kept, cfg);
        Decision::Suppress
    };
    Ok((
        StepOutcome {
            decision,
            actual: x,
            predicted: Some(predicted),
            abs_error: Some(abs_error),
        },
        next,
    ))
}

/// One cloud reconstruction step against the mirror state.
///
/// A received value is passed through unchanged and the mirror applies the
/// same transmit-branch update as the edge. An absent value means the edge
/// suppressed: the mirror forecasts from its own buffer and applies the
/// suppress-branch update. Receiving nothing while the mirror still expects
/// a forced transmission is a desync.
pub fn cloud_step(
    mirror: &FilterState,
    received: Option<f64>,
    model: &dyn Predictor,
    cfg: &FilterConfig,
) -> Result<(f64, FilterState)> {
    cfg.validate()?;
    if model.window_len() != cfg.k {
        return Err(Error::WindowMismatch {
            model: model.window_len(),
            configured: cfg.k,
        });
    }
    let mut next = mirror.clone();
    match received {
        Some(v) => {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "received value",
                });
            }
            apply_transmit(&mut next.buffer, v, cfg);
            next.transmit_flag = false;
            Ok((v, next))
        }
        None => {
            if mirror.transmit_flag {
                return Err(Error::MirrorDesync { step: 0 });
            }
            let padded = pad_buffer(&mirror.buffer, cfg.k, cfg.pad_policy)?;
            let predicted = model.predict(&padded)?;
            if !predicted.is_finite() {
                return Err(Error::NonFinite {
                    context: "cloud prediction",
                });
            }
            // The cloud never learns the actual on a suppressed step, so in
            // either sync mode it can only append its own forecast.
            apply_suppress(&mut next.buffer, predicted, cfg);
            Ok((predicted, next))
        }
    }
}

/// Runs edge and cloud in lockstep over a whole series.
///
/// A gap in the series raises the transmit flag on both sides, forcing a
/// re-transmission on resume. In synchronized mode the edge and mirror
/// buffers are checked for bit-equality after every step.
pub fn run_session(
    series: &SeriesFrame,
    model: &dyn Predictor,
    cfg: &FilterConfig,
) -> Result<(TransmissionLog, ReconstructedSeries)> {
    cfg.validate()?;
    if series.is_empty() {
        return Err(Error::EmptyInput("session requires a nonempty series"));
    }
    if model.window_len() != cfg.k {
        return Err(Error::WindowMismatch {
            model: model.window_len(),
            configured: cfg.k,
        });
    }

    let mut edge = FilterState::new();
    let mut cloud = FilterState::new();
    let mut log = TransmissionLog::default();
    let mut recon = ReconstructedSeries::default();
    let mut prev_ts: Option<Timestamp> = None;

    for (step, m) in series.measurements.iter().enumerate() {
        if let Some(prev) = prev_ts {
            if m.timestamp.unix() - prev.unix() != series.resolution {
                edge.transmit_flag = true;
                cloud.transmit_flag = true;
            }
        }
        prev_ts = Some(m.timestamp);

        let (outcome, edge_next) = edge_step(&edge, m.value, model, cfg)?;
        let received = match outcome.decision {
            Decision::Transmit => Some(m.value),
            Decision::Suppress => None,
        };
        let (value, cloud_next) = cloud_step(&cloud, received, model, cfg).map_err(|e| match e {
            Error::MirrorDesync { .. } => Error::MirrorDesync { step },
            other => other,
        })?;
        edge = edge_next;
        cloud = cloud_next;

        if cfg.sync_mode == SyncMode::Synchronized
            && (edge.buffer != cloud.buffer || edge.transmit_flag != cloud.transmit_flag)
        {
            return Err(Error::MirrorDesync { step });
        }

        log.entries.push(LogEntry {
            timestamp: m.timestamp,
            outcome,
        });
        recon.points.push(ReconPoint {
            timestamp: m.timestamp,
            value,
            is_prediction: received.is_none(),
        });
    }

    Ok((log, recon))
}
