//! Adam optimizer with bias-corrected moment estimates.

use crate::error::Result;
use crate::predictor::lstm::LstmParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment accumulators, shaped like the parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: LstmParams,
    v: LstmParams,
}

impl AdamState {
    pub fn new(hidden: usize, input: usize, window: usize) -> Self {
        AdamState {
            m: LstmParams::zeros(hidden, input, window),
            v: LstmParams::zeros(hidden, input, window),
        }
    }
}

/// One bias-corrected Adam update for a single coordinate. Returns the new
/// `(param, m, v)` triple.
#[inline]
pub fn adam_update_scalar(
    param: f64,
    grad: f64,
    m: f64,
    v: f64,
    t: u64,
    lr: f64,
) -> (f64, f64, f64) {
    let m_new = BETA1 * m + (1.0 - BETA1) * grad;
    let v_new = BETA2 * v + (1.0 - BETA2) * grad * grad;
    let m_hat = m_new / (1.0 - BETA1.powi(t as i32));
    let v_hat = v_new / (1.0 - BETA2.powi(t as i32));
    let param_new = param - lr * m_hat / (v_hat.sqrt() + EPSILON);
    (param_new, m_new, v_new)
}

/// Applies one Adam step in place. `t` is the 1-based step index used for
/// bias correction.
pub fn adam_step(
    params: &mut LstmParams,
    grads: &LstmParams,
    state: &mut AdamState,
    t: u64,
    lr: f64,
) -> Result<()> {
    debug_assert!(t >= 1, "Adam step index is 1-based");
    let grad_blocks = grads.blocks();
    let mut param_blocks = LstmParams::zip_blocks_mut(params);
    let mut m_blocks = LstmParams::zip_blocks_mut(&mut state.m);
    let mut v_blocks = LstmParams::zip_blocks_mut(&mut state.v);
    for b in 0..grad_blocks.len() {
        let g = grad_blocks[b];
        let p = &mut param_blocks[b];
        let m = &mut m_blocks[b];
        let v = &mut v_blocks[b];
        for j in 0..g.len() {
            let (pn, mn, vn) = adam_update_scalar(p[j], g[j], m[j], v[j], t, lr);
            p[j] = pn;
            m[j] = mn;
            v[j] = vn;
        }
    }
    Ok(())
}
