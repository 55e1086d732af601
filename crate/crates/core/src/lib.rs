//! Predictive filtering for sensor telemetry: an edge device runs a compact
//! forecaster over a rolling buffer of recent readings and transmits a sample
//! only when it deviates from the forecast by more than a tolerance; a cloud
//! mirror running the same model reconstructs the full stream from the sparse
//! transmissions.
//!
//! The crate is organised around the stages of that pipeline:
//!
//! - [`ingest`]: CSV parsing, validation, resampling, windowing, and
//!   normalization statistics.
//! - [`predictor`]: a from-scratch single-layer LSTM forecaster with
//!   backpropagation-through-time training, Adam, early stopping, and a
//!   portable JSON weight format.
//! - [`filter`]: the edge-side transmit/suppress state machine and the
//!   cloud-side reconstructor, with selectable buffer and synchronization
//!   policies.
//! - [`eval`]: data-reduction and MAE metrics, a scenario runner for
//!   train-here/infer-there experiments, and table rendering.
//! - [`synth`]: deterministic synthetic temperature series for demos and
//!   benchmarks.
//!
//! Every operation is deterministic given its inputs and seeds: training twice
//! with the same configuration produces byte-identical weight files, and
//! inference is a pure function, which is what allows the edge and cloud to
//! stay consistent without ever comparing state over the wire.

mod fsio;
pub mod cli;
pub mod error;
pub mod eval;
pub mod filter;
pub mod ingest;
pub mod predictor;
pub mod synth;

pub use error::{Error, Result};
