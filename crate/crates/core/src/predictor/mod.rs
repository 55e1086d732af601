//! From-scratch single-layer LSTM forecaster: deterministic inference,
//! backpropagation-through-time training with Adam, and a portable weight
//! format.

mod adam;
mod lstm;
mod train;
mod weights;

pub use adam::{adam_step, adam_update_scalar, AdamState, BETA1, BETA2, EPSILON};
pub use lstm::{
    batch_mse, cell_step, forward_normalized, init_params, loss_and_grads, LstmParams, Matrix,
    GATE_F, GATE_G, GATE_I, GATE_O,
};
pub use train::{train, EpochStats, TrainConfig, TrainReport};
pub use weights::{
    forward, load_weights, persistence_predict, save_weights, weights_from_json, weights_to_json,
    ModelMeta, ModelWeights, PersistencePredictor, Predictor, WEIGHTS_FORMAT_VERSION,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Randomness streams derived from the one master seed. Each consumer owns a
/// stream, so adding a consumer never perturbs the draws of another.
pub(crate) const SEED_STREAM_INIT: u64 = 0;
pub(crate) const SEED_STREAM_SHUFFLE: u64 = 1;
pub(crate) const SEED_STREAM_DROPOUT: u64 = 2;

/// Deterministic RNG for (`seed`, `stream`).
pub fn rng_for_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
