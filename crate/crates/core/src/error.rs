//! Crate-wide error type.

use std::path::PathBuf;

use crate::ingest::Timestamp;
use crate::predictor::TrainReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("no valid rows in {path} ({rejected} rejected)")]
    NoValidRows { path: PathBuf, rejected: usize },

    #[error("missing column '{column}' in {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error(
        "conflicting duplicate timestamp {timestamp} at rows {row_a} and {row_b} \
         (values {value_a} vs {value_b})"
    )]
    DuplicateConflict {
        timestamp: Timestamp,
        row_a: usize,
        row_b: usize,
        value_a: f64,
        value_b: f64,
    },

    #[error(
        "irregular cadence at {at}: step of {delta}s is not a multiple of the \
         {resolution}s resolution"
    )]
    IrregularCadence {
        at: Timestamp,
        delta: i64,
        resolution: i64,
    },

    #[error("cannot resample from {from}s to {to}s: target must be an integer multiple")]
    ResampleRatio { from: i64, to: i64 },

    #[error("cannot resample from {from}s up to {to}s: only downsampling is supported")]
    Upsample { from: i64, to: i64 },

    #[error("constant series: standard deviation is zero")]
    ConstantSeries,

    #[error("no gap-free run of length {needed} to build windows from")]
    NoWindows { needed: usize },

    #[error("split would leave the {side} side empty")]
    EmptySplit { side: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model window {model} does not match configured buffer size {configured}")]
    WindowMismatch { model: usize, configured: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence {
        epoch: usize,
        report: Box<TrainReport>,
    },

    #[error("unsupported weight file format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("corrupt weight file: {0}")]
    CorruptWeights(String),

    #[error("empty buffer: at least one value is required")]
    EmptyBuffer,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("edge and cloud state diverged at step {step}")]
    MirrorDesync { step: usize },

    #[error("invalid scenario '{name}': {reason}")]
    ScenarioInvalid { name: String, reason: String },

    #[error("cached weights at {path} do not match the requested configuration: {reason}")]
    CacheMismatch { path: PathBuf, reason: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("TOML error in {path}: {message}")]
    Toml { path: PathBuf, message: String },
}

impl Error {
    /// Process exit code for CLI reporting: 3 for numerical failures,
    /// 2 for input and validation errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
