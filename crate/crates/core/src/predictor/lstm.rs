//! Single-layer LSTM forecaster: parameters, forward inference, and full
//! backpropagation through time.
//!
//! Gate order is input, forget, cell candidate, output throughout:
//!
//! ```text
//! i = σ(Wᵢx + Uᵢh + bᵢ)        f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)  o = σ(W_o x + U_o h + b_o)
//! c' = f⊙c + i⊙g                 h' = o⊙tanh(c')
//! ```
//!
//! The dense head is `y = dense_w·h + dense_b` with linear activation.
//! Everything is f64; the same arithmetic path is used at train and inference
//! time so that repeated calls are bit-identical.

#![allow(clippy::needless_range_loop)]

use rand::Rng;

use crate::error::{Error, Result};
use crate::predictor::rng_for_stream;

/// Gate indices into the per-gate parameter blocks.
pub const GATE_I: usize = 0;
pub const GATE_F: usize = 1;
pub const GATE_G: usize = 2;
pub const GATE_O: usize = 3;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, expect_rows: usize, expect_cols: usize) -> Result<Self> {
        if rows.len() != expect_rows {
            return Err(Error::DimensionMismatch(format!(
                "expected {expect_rows} rows, got {}",
                rows.len()
            )));
        }
        let mut data = Vec::with_capacity(expect_rows * expect_cols);
        for row in &rows {
            if row.len() != expect_cols {
                return Err(Error::DimensionMismatch(format!(
                    "expected {expect_cols} columns, got {}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: expect_rows,
            cols: expect_cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Full parameter set of the forecaster.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub hidden: usize,
    pub input: usize,
    /// Input sequence length the model consumes.
    pub window: usize,
    /// Input-to-hidden blocks, one per gate, each `hidden × input`.
    pub input_w: [Matrix; 4],
    /// Hidden-to-hidden blocks, one per gate, each `hidden × hidden`.
    pub recur_w: [Matrix; 4],
    /// Gate biases, each of length `hidden`.
    pub bias: [Vec<f64>; 4],
    /// Dense output weights, length `hidden`.
    pub dense_w: Vec<f64>,
    pub dense_b: f64,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize, window: usize) -> Self {
        LstmParams {
            hidden,
            input,
            window,
            input_w: std::array::from_fn(|_| Matrix::zeros(hidden, input)),
            recur_w: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            bias: std::array::from_fn(|_| vec![0.0; hidden]),
            dense_w: vec![0.0; hidden],
            dense_b: 0.0,
        }
    }

    /// Trainable parameter count: `4·(hidden·(input+hidden) + hidden) + hidden + 1`.
    pub fn param_count(&self) -> usize {
        4 * (self.hidden * (self.input + self.hidden) + self.hidden) + self.hidden + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.input == 0 || self.window == 0 {
            return Err(Error::DimensionMismatch(
                "hidden, input, and window must all be positive".into(),
            ));
        }
        for g in 0..4 {
            if self.input_w[g].rows != self.hidden || self.input_w[g].cols != self.input {
                return Err(Error::DimensionMismatch(format!(
                    "input weight block {g} is {}x{}, expected {}x{}",
                    self.input_w[g].rows, self.input_w[g].cols, self.hidden, self.input
                )));
            }
            if self.recur_w[g].rows != self.hidden || self.recur_w[g].cols != self.hidden {
                return Err(Error::DimensionMismatch(format!(
                    "recurrent weight block {g} is {}x{}, expected {}x{}",
                    self.recur_w[g].rows, self.recur_w[g].cols, self.hidden, self.hidden
                )));
            }
            if self.bias[g].len() != self.hidden {
                return Err(Error::DimensionMismatch(format!(
                    "bias block {g} has length {}, expected {}",
                    self.bias[g].len(),
                    self.hidden
                )));
            }
        }
        if self.dense_w.len() != self.hidden {
            return Err(Error::DimensionMismatch(format!(
                "dense weights have length {}, expected {}",
                self.dense_w.len(),
                self.hidden
            )));
        }
        if !self.iter_values().all(f64::is_finite) {
            return Err(Error::NonFinite {
                context: "model parameters",
            });
        }
        Ok(())
    }

    fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.input_w
            .iter()
            .chain(self.recur_w.iter())
            .flat_map(|m| m.data.iter().copied())
            .chain(self.bias.iter().flat_map(|b| b.iter().copied()))
            .chain(self.dense_w.iter().copied())
            .chain(std::iter::once(self.dense_b))
    }

    /// All parameter storage as ordered mutable slices. Used to apply
    /// elementwise updates across parameter sets kept in lockstep (the
    /// optimizer state shares this shape).
    pub(crate) fn zip_blocks_mut(params: &mut LstmParams) -> Vec<&mut [f64]> {
        let mut blocks: Vec<&mut [f64]> = Vec::with_capacity(14);
        for m in params.input_w.iter_mut() {
            blocks.push(m.data.as_mut_slice());
        }
        for m in params.recur_w.iter_mut() {
            blocks.push(m.data.as_mut_slice());
        }
        for b in params.bias.iter_mut() {
            blocks.push(b.as_mut_slice());
        }
        blocks.push(params.dense_w.as_mut_slice());
        blocks.push(std::slice::from_mut(&mut params.dense_b));
        blocks
    }

    pub(crate) fn blocks(&self) -> Vec<&[f64]> {
        let mut blocks: Vec<&[f64]> = Vec::with_capacity(14);
        for m in self.input_w.iter() {
            blocks.push(m.data.as_slice());
        }
        for m in self.recur_w.iter() {
            blocks.push(m.data.as_slice());
        }
        for b in self.bias.iter() {
            blocks.push(b.as_slice());
        }
        blocks.push(self.dense_w.as_slice());
        blocks.push(std::slice::from_ref(&self.dense_b));
        blocks
    }
}

/// Glorot-uniform initialization per block (`a = sqrt(6/(fan_in+fan_out))`),
/// zero biases except the forget-gate bias at 1.0. Reproducible from `seed`.
pub fn init_params(hidden: usize, input: usize, window: usize, seed: u64) -> Result<LstmParams> {
    if hidden == 0 || input == 0 || window == 0 {
        return Err(Error::DimensionMismatch(
            "hidden, input, and window must all be positive".into(),
        ));
    }
    let mut rng = rng_for_stream(seed, super::SEED_STREAM_INIT);
    let mut params = LstmParams::zeros(hidden, input, window);
    let a_input = (6.0 / (input + hidden) as f64).sqrt();
    for m in params.input_w.iter_mut() {
        for w in m.data.iter_mut() {
            *w = rng.gen_range(-a_input..a_input);
        }
    }
    let a_recur = (6.0 / (hidden + hidden) as f64).sqrt();
    for m in params.recur_w.iter_mut() {
        for w in m.data.iter_mut() {
            *w = rng.gen_range(-a_recur..a_recur);
        }
    }
    for b in params.bias[GATE_F].iter_mut() {
        *b = 1.0;
    }
    let a_dense = (6.0 / (hidden + 1) as f64).sqrt();
    for w in params.dense_w.iter_mut() {
        *w = rng.gen_range(-a_dense..a_dense);
    }
    Ok(params)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations recorded during an unroll, laid out step-major with
/// stride `hidden`.
struct StepTrace {
    hidden: usize,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    /// States *before* each step, plus the final state: `window + 1` rows.
    h: Vec<f64>,
    c: Vec<f64>,
}

impl StepTrace {
    fn new(hidden: usize, window: usize) -> Self {
        StepTrace {
            hidden,
            i: vec![0.0; hidden * window],
            f: vec![0.0; hidden * window],
            g: vec![0.0; hidden * window],
            o: vec![0.0; hidden * window],
            tanh_c: vec![0.0; hidden * window],
            h: vec![0.0; hidden * (window + 1)],
            c: vec![0.0; hidden * (window + 1)],
        }
    }

    fn reset(&mut self) {
        let h = self.hidden;
        self.h[..h].iter_mut().for_each(|v| *v = 0.0);
        self.c[..h].iter_mut().for_each(|v| *v = 0.0);
    }

    fn row(buf: &[f64], hidden: usize, t: usize) -> &[f64] {
        &buf[t * hidden..(t + 1) * hidden]
    }
}

/// One cell step into caller-provided trace rows at step `t`.
/// `x` is the input vector for this step.
fn step_into(params: &LstmParams, x: &[f64], trace: &mut StepTrace, t: usize) {
    let hidden = params.hidden;
    let row = t * hidden;
    let (h_head, h_tail) = trace.h.split_at_mut(row + hidden);
    let h_prev = &h_head[row..];
    let h_next = &mut h_tail[..hidden];
    let (c_head, c_tail) = trace.c.split_at_mut(row + hidden);
    let c_prev = &c_head[row..];
    let c_next = &mut c_tail[..hidden];

    // Pre-activations per gate: b + W.x + U.h
    let mut pre = [0.0f64; 4];
    for unit in 0..hidden {
        for gate in 0..4 {
            let mut acc = params.bias[gate][unit];
            for (w, xv) in params.input_w[gate].row(unit).iter().zip(x) {
                acc += w * xv;
            }
            for (u, hv) in params.recur_w[gate].row(unit).iter().zip(h_prev) {
                acc += u * hv;
            }
            pre[gate] = acc;
        }
        let i = sigmoid(pre[GATE_I]);
        let f = sigmoid(pre[GATE_F]);
        let g = pre[GATE_G].tanh();
        let o = sigmoid(pre[GATE_O]);
        let c_new = f * c_prev[unit] + i * g;
        let tanh_c = c_new.tanh();

        trace.i[row + unit] = i;
        trace.f[row + unit] = f;
        trace.g[row + unit] = g;
        trace.o[row + unit] = o;
        trace.tanh_c[row + unit] = tanh_c;
        c_next[unit] = c_new;
        h_next[unit] = o * tanh_c;
    }
}

/// Standard LSTM cell update. Returns the next hidden and cell states.
pub fn cell_step(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    params: &LstmParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != params.input || h.len() != params.hidden || c.len() != params.hidden {
        return Err(Error::DimensionMismatch(format!(
            "cell_step inputs ({}, {}, {}) do not match model dimensions ({}, {})",
            x.len(),
            h.len(),
            c.len(),
            params.input,
            params.hidden
        )));
    }
    let mut trace = StepTrace::new(params.hidden, 1);
    trace.h[..params.hidden].copy_from_slice(h);
    trace.c[..params.hidden].copy_from_slice(c);
    step_into(params, x, &mut trace, 0);
    let h_new = trace.h[params.hidden..].to_vec();
    let c_new = trace.c[params.hidden..].to_vec();
    Ok((h_new, c_new))
}

/// Unrolls the cell over a normalized scalar window and applies the dense
/// head. Output stays in normalized units; no dropout is ever applied here.
pub fn forward_normalized(window: &[f64], params: &LstmParams) -> Result<f64> {
    if window.len() != params.window {
        return Err(Error::DimensionMismatch(format!(
            "window length {} does not match model window {}",
            window.len(),
            params.window
        )));
    }
    if params.input != 1 {
        return Err(Error::DimensionMismatch(format!(
            "scalar forward requires input size 1, model has {}",
            params.input
        )));
    }
    let mut trace = StepTrace::new(params.hidden, params.window);
    trace.reset();
    for (t, &x) in window.iter().enumerate() {
        step_into(params, std::slice::from_ref(&x), &mut trace, t);
    }
    let h_final = StepTrace::row(&trace.h, params.hidden, params.window);
    let mut y = params.dense_b;
    for (w, h) in params.dense_w.iter().zip(h_final) {
        y += w * h;
    }
    if !y.is_finite() {
        return Err(Error::NonFinite {
            context: "forward pass output",
        });
    }
    Ok(y)
}

/// Mean squared error and full BPTT gradients over a batch of normalized
/// windows.
///
/// `dropout_masks`, when present, holds one mask per example applied to the
/// final hidden vector before the dense head; entries are either `0.0` or
/// `1/keep` (inverted dropout), so inference needs no rescaling. Gradients are
/// accumulated in example order, which keeps results bit-identical across
/// runs.
pub fn loss_and_grads(
    inputs: &[Vec<f64>],
    targets: &[f64],
    params: &LstmParams,
    dropout_masks: Option<&[Vec<f64>]>,
) -> Result<(f64, LstmParams)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::EmptyInput(
            "batch inputs and targets must be nonempty and equal-length",
        ));
    }
    if let Some(masks) = dropout_masks {
        if masks.len() != inputs.len() || masks.iter().any(|m| m.len() != params.hidden) {
            return Err(Error::DimensionMismatch(
                "dropout masks must match batch size and hidden size".into(),
            ));
        }
    }
    let hidden = params.hidden;
    let window = params.window;
    let batch = inputs.len() as f64;

    let mut grads = LstmParams::zeros(hidden, params.input, window);
    let mut loss_sum = 0.0;

    let mut trace = StepTrace::new(hidden, window);
    let mut dh = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut dh_next = vec![0.0; hidden];
    let mut d_raw = [vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden]];

    for (ex, (input, &target)) in inputs.iter().zip(targets).enumerate() {
        if input.len() != window {
            return Err(Error::DimensionMismatch(format!(
                "example {ex} has window length {}, expected {window}",
                input.len()
            )));
        }
        trace.reset();
        for (t, &x) in input.iter().enumerate() {
            step_into(params, std::slice::from_ref(&x), &mut trace, t);
        }
        let h_final = StepTrace::row(&trace.h, hidden, window);
        let mask = dropout_masks.map(|m| m[ex].as_slice());

        let mut pred = params.dense_b;
        match mask {
            Some(mask) => {
                for ((w, h), m) in params.dense_w.iter().zip(h_final).zip(mask) {
                    pred += w * h * m;
                }
            }
            None => {
                for (w, h) in params.dense_w.iter().zip(h_final) {
                    pred += w * h;
                }
            }
        }
        let residual = pred - target;
        loss_sum += residual * residual;
        let dpred = 2.0 * residual / batch;

        // Dense head gradients and the gradient flowing into the final h.
        grads.dense_b += dpred;
        for unit in 0..hidden {
            let m = mask.map_or(1.0, |m| m[unit]);
            grads.dense_w[unit] += dpred * h_final[unit] * m;
            dh[unit] = dpred * params.dense_w[unit] * m;
        }
        dc_next.iter_mut().for_each(|v| *v = 0.0);
        dh_next.iter_mut().for_each(|v| *v = 0.0);

        for t in (0..window).rev() {
            let idx = t * hidden;
            let x = input[t];
            let h_prev = &trace.h[idx..idx + hidden];
            let c_prev = &trace.c[idx..idx + hidden];

            for unit in 0..hidden {
                let i = trace.i[idx + unit];
                let f = trace.f[idx + unit];
                let g = trace.g[idx + unit];
                let o = trace.o[idx + unit];
                let tanh_c = trace.tanh_c[idx + unit];

                let dh_total = if t == window - 1 {
                    dh[unit]
                } else {
                    dh_next[unit]
                };
                let dc = dh_total * o * (1.0 - tanh_c * tanh_c) + dc_next[unit];

                d_raw[GATE_I][unit] = dc * g * i * (1.0 - i);
                d_raw[GATE_F][unit] = dc * c_prev[unit] * f * (1.0 - f);
                d_raw[GATE_G][unit] = dc * i * (1.0 - g * g);
                d_raw[GATE_O][unit] = dh_total * tanh_c * o * (1.0 - o);

                dc_next[unit] = dc * f;
            }

            // Parameter gradients and the recurrent gradient for step t-1.
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for gate in 0..4 {
                let d = &d_raw[gate];
                let gw = &mut grads.input_w[gate];
                let gu = &mut grads.recur_w[gate];
                let gb = &mut grads.bias[gate];
                let u = &params.recur_w[gate];
                for unit in 0..hidden {
                    let dg = d[unit];
                    if dg == 0.0 {
                        continue;
                    }
                    gb[unit] += dg;
                    gw.row_mut(unit)[0] += dg * x;
                    let gu_row = gu.row_mut(unit);
                    for (acc, hv) in gu_row.iter_mut().zip(h_prev) {
                        *acc += dg * hv;
                    }
                    let u_row = u.row(unit);
                    for (acc, uv) in dh_next.iter_mut().zip(u_row) {
                        *acc += dg * uv;
                    }
                }
            }
        }
    }

    let mse = loss_sum / batch;
    if !mse.is_finite() {
        return Err(Error::NonFinite {
            context: "training loss",
        });
    }
    Ok((mse, grads))
}

/// Forward-only mean squared error over a batch, dropout off.
pub fn batch_mse(inputs: &[Vec<f64>], targets: &[f64], params: &LstmParams) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::EmptyInput(
            "batch inputs and targets must be nonempty and equal-length",
        ));
    }
    let mut sum = 0.0;
    for (input, &target) in inputs.iter().zip(targets) {
        let pred = forward_normalized(input, params)?;
        let r = pred - target;
        sum += r * r;
    }
    Ok(sum / inputs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn cell_step_all_zero_weights_is_fixed_at_zero() {
        let p = LstmParams::zeros(3, 1, 5);
        let (h, c) = cell_step(&[7.3], &[0.0; 3], &[0.0; 3], &p).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn cell_step_zero_weights_halves_cell_state() {
        let p = LstmParams::zeros(2, 1, 5);
        let c0 = [2.0, -1.4];
        let (h, c) = cell_step(&[0.3], &[0.0; 2], &c0, &p).unwrap();
        for unit in 0..2 {
            // i = f = o = 0.5, g = 0  =>  c' = 0.5·c,  h' = 0.5·tanh(0.5·c)
            assert!((c[unit] - 0.5 * c0[unit]).abs() < 1e-15);
            assert!((h[unit] - 0.5 * (0.5 * c0[unit]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_step_saturated_biases() {
        let mut p = LstmParams::zeros(1, 1, 5);
        p.bias[GATE_I][0] = 10.0;
        p.bias[GATE_G][0] = 10.0;
        p.bias[GATE_O][0] = 10.0;
        let (h, c) = cell_step(&[0.0], &[0.0], &[0.0], &p).unwrap();
        let sig10 = 1.0 / (1.0 + (-10.0f64).exp());
        let expected_c = sig10 * 10.0f64.tanh();
        assert!((c[0] - expected_c).abs() < 1e-12);
        assert!((c[0] - 0.99995).abs() < 1e-4);
        let expected_h = sig10 * expected_c.tanh();
        assert!((h[0] - expected_h).abs() < 1e-12);
        assert!((h[0] - 0.7615).abs() < 1e-3);
    }

    #[test]
    fn cell_step_rejects_dimension_mismatch() {
        let p = LstmParams::zeros(3, 1, 5);
        assert!(cell_step(&[1.0], &[0.0; 2], &[0.0; 3], &p).is_err());
    }

    #[test]
    fn init_is_reproducible_and_counts_parameters() {
        let a = init_params(64, 1, 24, 42).unwrap();
        let b = init_params(64, 1, 24, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.param_count(), 16961);

        let c = init_params(64, 1, 24, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_forget_bias_is_one_and_weights_bounded() {
        let p = init_params(8, 1, 6, 7).unwrap();
        assert!(p.bias[GATE_F].iter().all(|&b| b == 1.0));
        assert!(p.bias[GATE_I].iter().all(|&b| b == 0.0));
        let a_input = (6.0 / 9.0f64).sqrt();
        for m in &p.input_w {
            assert!(m.as_slice().iter().all(|w| w.abs() < a_input));
        }
        let a_recur = (6.0 / 16.0f64).sqrt();
        for m in &p.recur_w {
            assert!(m.as_slice().iter().all(|w| w.abs() < a_recur));
        }
    }

    #[test]
    fn zero_params_on_zero_targets_gives_zero_loss_and_grads() {
        let p = LstmParams::zeros(4, 1, 3);
        let inputs = vec![vec![0.5, -0.2, 0.1], vec![1.0, 0.0, -1.0]];
        let targets = vec![0.0, 0.0];
        let (mse, grads) = loss_and_grads(&inputs, &targets, &p, None).unwrap();
        assert_eq!(mse, 0.0);
        assert_eq!(grads.dense_b, 0.0);
        assert!(grads.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_batch_keeps_mse_and_grads() {
        let p = init_params(3, 1, 4, 11).unwrap();
        let inputs = vec![vec![0.1, 0.4, -0.3, 0.8], vec![-0.5, 0.2, 0.0, 0.3]];
        let targets = vec![0.7, -0.1];
        let (mse1, g1) = loss_and_grads(&inputs, &targets, &p, None).unwrap();

        let mut doubled_inputs = inputs.clone();
        doubled_inputs.extend(inputs.clone());
        let mut doubled_targets = targets.clone();
        doubled_targets.extend(targets.clone());
        let (mse2, g2) = loss_and_grads(&doubled_inputs, &doubled_targets, &p, None).unwrap();

        assert!((mse1 - mse2).abs() < 1e-12);
        for (a, b) in g1.blocks().iter().zip(g2.blocks().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    /// Central finite differences of the batch loss, the independent oracle
    /// for the analytic BPTT gradients.
    fn finite_difference_grads(
        inputs: &[Vec<f64>],
        targets: &[f64],
        params: &LstmParams,
        masks: Option<&[Vec<f64>]>,
        h: f64,
    ) -> LstmParams {
        let loss_of = |p: &LstmParams| -> f64 {
            // Forward-only loss with the same dropout masks applied.
            let mut sum = 0.0;
            for (ex, (input, &target)) in inputs.iter().zip(targets).enumerate() {
                let mut hs = vec![0.0; p.hidden];
                let mut cs = vec![0.0; p.hidden];
                for &x in input {
                    let (h2, c2) = cell_step(&[x], &hs, &cs, p).unwrap();
                    hs = h2;
                    cs = c2;
                }
                let mut pred = p.dense_b;
                for unit in 0..p.hidden {
                    let m = masks.map_or(1.0, |m| m[ex][unit]);
                    pred += p.dense_w[unit] * hs[unit] * m;
                }
                let r = pred - target;
                sum += r * r;
            }
            sum / inputs.len() as f64
        };

        let mut fd = params.clone();
        let n_blocks = params.blocks().len();
        for b in 0..n_blocks {
            let len = params.blocks()[b].len();
            for j in 0..len {
                let mut plus = params.clone();
                LstmParams::zip_blocks_mut(&mut plus)[b][j] += h;
                let mut minus = params.clone();
                LstmParams::zip_blocks_mut(&mut minus)[b][j] -= h;
                let d = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                LstmParams::zip_blocks_mut(&mut fd)[b][j] = d;
            }
        }
        fd
    }

    fn assert_grads_close(analytic: &LstmParams, numeric: &LstmParams) {
        for (a_block, n_block) in analytic.blocks().iter().zip(numeric.blocks().iter()) {
            for (&a, &n) in a_block.iter().zip(n_block.iter()) {
                let tol = 1e-7f64.max(1e-4 * a.abs().max(n.abs()));
                assert!(
                    (a - n).abs() <= tol,
                    "gradient mismatch: analytic {a} vs numeric {n}"
                );
            }
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let params = init_params(4, 1, 5, 3).unwrap();
        let mut rng = rng_for_stream(99, 0);
        let inputs = vec![(0..5).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<f64>>()];
        let targets = vec![rng.gen_range(-1.0..1.0)];
        let (_, analytic) = loss_and_grads(&inputs, &targets, &params, None).unwrap();
        let numeric = finite_difference_grads(&inputs, &targets, &params, None, 1e-5);
        assert_grads_close(&analytic, &numeric);
    }

    #[test]
    fn bptt_matches_finite_differences_with_dropout_mask() {
        let params = init_params(4, 1, 5, 17).unwrap();
        let mut rng = rng_for_stream(5, 0);
        let inputs = vec![
            (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(),
            (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(),
        ];
        let targets = vec![0.3, -0.8];
        // Fixed inverted-dropout masks with keep = 0.5.
        let masks = vec![
            vec![2.0, 0.0, 2.0, 0.0],
            vec![0.0, 2.0, 2.0, 2.0],
        ];
        let (_, analytic) = loss_and_grads(&inputs, &targets, &params, Some(&masks)).unwrap();
        let numeric = finite_difference_grads(&inputs, &targets, &params, Some(&masks), 1e-5);
        assert_grads_close(&analytic, &numeric);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn parameter_count_formula(hidden in 1usize..12, input in 1usize..4, window in 1usize..10) {
            let p = LstmParams::zeros(hidden, input, window);
            let counted: usize = p.blocks().iter().map(|b| b.len()).sum();
            prop_assert_eq!(counted, p.param_count());
            prop_assert_eq!(counted, 4 * (hidden * (input + hidden) + hidden) + hidden + 1);
        }
    }
}
