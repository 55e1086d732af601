//! Mini-batch training loop: Adam, per-epoch validation, learning-rate decay
//! on plateau, and early stopping with best-weight restore.
//!
//! All randomness (initialization, batch-order shuffling, dropout masks) is
//! derived from one seed through separate counted streams, so adding a new
//! consumer of randomness never perturbs the existing ones and two runs with
//! the same inputs produce bit-identical weights.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{NormStats, WindowSet};
use crate::predictor::adam::{adam_step, AdamState};
use crate::predictor::lstm::{batch_mse, loss_and_grads, LstmParams};
use crate::predictor::weights::{ModelMeta, ModelWeights};
use crate::predictor::{rng_for_stream, SEED_STREAM_DROPOUT, SEED_STREAM_SHUFFLE};

/// Training hyperparameters. Defaults follow the deployed recipe: Adam at
/// 1e-3, batches of 32, up to 100 epochs, dropout 0.2, early stopping and
/// halving learning-rate decay on validation plateau.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    /// Stop after this many epochs without validation improvement.
    pub patience_stop: usize,
    /// Decay the learning rate after this many stagnant epochs.
    pub patience_decay: usize,
    pub decay_factor: f64,
    pub min_lr: f64,
    pub seed: u64,
    /// Chronological tail fraction of the training windows held out for
    /// validation; used by callers when splitting.
    pub val_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 32,
            max_epochs: 100,
            dropout: 0.2,
            patience_stop: 10,
            patience_decay: 5,
            decay_factor: 0.5,
            min_lr: 1e-5,
            seed: 0,
            val_frac: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decay_factor must be in (0, 1), got {}",
                self.decay_factor
            )));
        }
        if self.min_lr <= 0.0 || !self.min_lr.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "min_lr must be positive, got {}",
                self.min_lr
            )));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "max_epochs must be at least 1 (empty training)".into(),
            ));
        }
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "val_frac must be in (0, 1), got {}",
                self.val_frac
            )));
        }
        Ok(())
    }
}

/// Loss trajectory of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
}

/// What training did: per-epoch losses, where it stopped, and which epoch's
/// weights were kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub final_lr: f64,
    pub param_count: usize,
}

/// Plateau tracking shared by early stopping and learning-rate decay.
/// Improvement means strictly lower validation loss than the best seen.
#[derive(Clone, Debug)]
pub(crate) struct PlateauTracker {
    patience_stop: usize,
    patience_decay: usize,
    best: f64,
    best_epoch: usize,
    stale_stop: usize,
    stale_decay: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PlateauAction {
    NewBest,
    Continue,
    Decay,
    Stop,
}

impl PlateauTracker {
    pub(crate) fn new(patience_stop: usize, patience_decay: usize) -> Self {
        PlateauTracker {
            patience_stop,
            patience_decay,
            best: f64::INFINITY,
            best_epoch: 0,
            stale_stop: 0,
            stale_decay: 0,
        }
    }

    pub(crate) fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }

    pub(crate) fn observe(&mut self, epoch: usize, val_mse: f64) -> PlateauAction {
        if val_mse < self.best {
            self.best = val_mse;
            self.best_epoch = epoch;
            self.stale_stop = 0;
            self.stale_decay = 0;
            return PlateauAction::NewBest;
        }
        self.stale_stop += 1;
        self.stale_decay += 1;
        if self.stale_stop >= self.patience_stop {
            PlateauAction::Stop
        } else if self.stale_decay >= self.patience_decay {
            self.stale_decay = 0;
            PlateauAction::Decay
        } else {
            PlateauAction::Continue
        }
    }
}

/// Trains `initial` on the given windows and returns the weights from the
/// best validation epoch.
///
/// Batches are chronological slices of the training set; only the order in
/// which batches are visited is shuffled each epoch. Validation runs with
/// dropout off. A non-finite loss aborts with the report accumulated so far.
pub fn train(
    initial: LstmParams,
    train_set: &WindowSet,
    val_set: &WindowSet,
    cfg: &TrainConfig,
    norm: NormStats,
    meta: ModelMeta,
) -> Result<(ModelWeights, TrainReport)> {
    cfg.validate()?;
    initial.validate()?;
    norm.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyInput("training and validation sets must be nonempty"));
    }
    if train_set.k != initial.window || val_set.k != initial.window {
        return Err(Error::WindowMismatch {
            model: initial.window,
            configured: train_set.k,
        });
    }

    let hidden = initial.hidden;
    let n = train_set.len();
    let n_batches = n.div_ceil(cfg.batch_size);
    let batch_range = |b: usize| (b * cfg.batch_size, ((b + 1) * cfg.batch_size).min(n));

    let mut params = initial;
    let mut adam = AdamState::new(hidden, params.input, params.window);
    let mut shuffle_rng = rng_for_stream(cfg.seed, SEED_STREAM_SHUFFLE);
    let mut dropout_rng = rng_for_stream(cfg.seed, SEED_STREAM_DROPOUT);
    let keep = 1.0 - cfg.dropout;

    let mut lr = cfg.lr;
    let mut step: u64 = 0;
    let mut tracker = PlateauTracker::new(cfg.patience_stop, cfg.patience_decay);
    let mut best_params = params.clone();
    let mut report = TrainReport {
        epochs: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
        best_val_mse: f64::INFINITY,
        final_lr: lr,
        param_count: params.param_count(),
    };

    let mut batch_order: Vec<usize> = (0..n_batches).collect();
    let mut masks: Vec<Vec<f64>> = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        batch_order.shuffle(&mut shuffle_rng);
        let mut sq_err_sum = 0.0;
        for &b in &batch_order {
            let (lo, hi) = batch_range(b);
            let inputs = &train_set.inputs[lo..hi];
            let targets = &train_set.targets[lo..hi];

            let mask_ref = if cfg.dropout > 0.0 {
                masks.clear();
                for _ in 0..inputs.len() {
                    let mask: Vec<f64> = (0..hidden)
                        .map(|_| {
                            if dropout_rng.gen::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    masks.push(mask);
                }
                Some(masks.as_slice())
            } else {
                None
            };

            let (batch_loss, grads) = match loss_and_grads(inputs, targets, &params, mask_ref) {
                Ok(r) => r,
                Err(Error::NonFinite { .. }) => {
                    report.stopped_epoch = epoch;
                    let (best_epoch, best_val) = tracker.best();
                    report.best_epoch = best_epoch;
                    report.best_val_mse = best_val;
                    report.final_lr = lr;
                    return Err(Error::Divergence {
                        epoch,
                        report: Box::new(report),
                    });
                }
                Err(e) => return Err(e),
            };
            sq_err_sum += batch_loss * (hi - lo) as f64;
            step += 1;
            adam_step(&mut params, &grads, &mut adam, step, lr)?;
        }
        let train_mse = sq_err_sum / n as f64;
        let val_mse = batch_mse(&val_set.inputs, &val_set.targets, &params)?;
        report.epochs.push(EpochStats {
            epoch,
            train_mse,
            val_mse,
            lr,
        });

        match tracker.observe(epoch, val_mse) {
            PlateauAction::NewBest => {
                best_params = params.clone();
                report.stopped_epoch = epoch;
            }
            PlateauAction::Continue => {
                report.stopped_epoch = epoch;
            }
            PlateauAction::Decay => {
                lr = (lr * cfg.decay_factor).max(cfg.min_lr);
                report.stopped_epoch = epoch;
            }
            PlateauAction::Stop => {
                report.stopped_epoch = epoch;
                break;
            }
        }
    }

    let (best_epoch, best_val) = tracker.best();
    report.best_epoch = best_epoch;
    report.best_val_mse = best_val;
    report.final_lr = lr;
    let weights = ModelWeights::new(best_params, norm, meta)?;
    Ok((weights, report))
}
