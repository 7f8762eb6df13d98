//! LSTM layer with full backpropagation through time.
//!
//! Gate pre-activations are laid out as `[i | f | g | o]` blocks of width
//! `H`:
//!
//! ```text
//! i = σ(x·Wxi + h·Whi + bi)     f = σ(x·Wxf + h·Whf + bf)
//! g = tanh(x·Wxg + h·Whg + bg)  o = σ(x·Wxo + h·Who + bo)
//! c' = f⊙c + i⊙g                h' = o⊙tanh(c')
//! ```
//!
//! Internally everything is time-major (`[T, B, ·]`) so each step touches a
//! contiguous block. The input projection `x·Wx` is done in one GEMM over
//! all steps before the recurrence starts. The backward sweep folds each
//! step's gate gradients into the weight and input gradients as it goes, so
//! only one step of them is ever held.

use std::cell::RefCell;

use super::{cell, gemm, Module, NnError, Param, Tensor};
use crate::rng::Rng;

const POOL_SLOTS: usize = 16;

thread_local! {
    /// Buffers of dropped traces, reused so that large unrolls do not
    /// fault in fresh pages on every call.
    static POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

/// Empty vector with room for at least `len` values.
fn pooled(len: usize) -> Vec<f64> {
    POOL.with_borrow_mut(|pool| {
        let best = pool
            .iter()
            .enumerate()
            .filter(|(_, v)| v.capacity() >= len)
            .min_by_key(|(_, v)| v.capacity())
            .map(|(i, _)| i);
        match best {
            Some(i) => {
                let mut v = pool.swap_remove(i);
                v.clear();
                v
            }
            None => Vec::with_capacity(len),
        }
    })
}

fn pooled_zeros(len: usize) -> Vec<f64> {
    let mut v = pooled(len);
    v.resize(len, 0.0);
    v
}

fn recycle(v: Vec<f64>) {
    if v.capacity() == 0 {
        return;
    }
    POOL.with_borrow_mut(|pool| {
        if pool.len() < POOL_SLOTS {
            pool.push(v);
        } else if let Some(small) = pool.iter_mut().min_by_key(|p| p.capacity()) {
            if small.capacity() < v.capacity() {
                *small = v;
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceOutput {
    LastHidden,
    AllHidden,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    /// `[in, 4H]`
    pub w_input: Param,
    /// `[H, 4H]`
    pub w_hidden: Param,
    /// `[4H]`
    pub bias: Param,
}

/// Everything the backward sweep needs from a forward unroll.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    batch: usize,
    steps: usize,
    hidden: usize,
    output: SequenceOutput,
    /// Time-major inputs `[T, B, in]`; empty for constant-drive unrolls.
    inputs: Vec<f64>,
    /// `[T+1, B, H]`, slot 0 is the zero initial state.
    hs: Vec<f64>,
    /// `[T+1, B, H]`
    cs: Vec<f64>,
    /// Post-activation gates `[T, B, 4H]`.
    gates: Vec<f64>,
    /// `tanh(c_t)`, `[T, B, H]`
    tanh_c: Vec<f64>,
}

impl Drop for LstmTrace {
    fn drop(&mut self) {
        for v in [
            &mut self.inputs,
            &mut self.hs,
            &mut self.cs,
            &mut self.gates,
            &mut self.tanh_c,
        ] {
            recycle(std::mem::take(v));
        }
    }
}

impl LstmTrace {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Hidden states `h_1..h_T`, time-major `[T, B, H]`.
    pub(crate) fn hidden_time_major(&self) -> &[f64] {
        &self.hs[self.batch * self.hidden..]
    }

    pub(crate) fn last_hidden(&self) -> &[f64] {
        let bh = self.batch * self.hidden;
        &self.hs[self.steps * bh..]
    }

    fn input_at(&self, t: usize, din: usize) -> &[f64] {
        let n = self.batch * din;
        &self.inputs[t * n..(t + 1) * n]
    }

    fn h_prev_at(&self, t: usize) -> &[f64] {
        let bh = self.batch * self.hidden;
        &self.hs[t * bh..(t + 1) * bh]
    }
}

enum Drive<'a> {
    /// Per-step `x·Wx + b`, `[T, B, 4H]`; becomes the gate buffer.
    Projected(Vec<f64>),
    /// Same `[B, 4H]` input pre-activation (bias not included) at every step.
    Constant(&'a [f64]),
}

/// Hidden-state gradient arriving from outside the layer.
#[derive(Clone, Copy)]
enum HiddenGrad<'a> {
    /// `[B, H]` at the final step only.
    Last(&'a [f64]),
    /// `[T, B, H]`
    Every(&'a [f64]),
}

impl HiddenGrad<'_> {
    fn at(&self, t: usize, steps: usize, bh: usize) -> Option<&[f64]> {
        match *self {
            HiddenGrad::Last(g) => (t + 1 == steps).then_some(g),
            HiddenGrad::Every(g) => Some(&g[t * bh..(t + 1) * bh]),
        }
    }
}

impl Lstm {
    pub fn new(inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        let fan_in = inputs + hidden;
        Self {
            w_input: Param::uniform(&[inputs, 4 * hidden], fan_in, rng),
            w_hidden: Param::uniform(&[hidden, 4 * hidden], fan_in, rng),
            bias: Param::uniform(&[4 * hidden], fan_in, rng),
        }
    }

    /// Layer with every weight and bias zero.
    pub fn zeroed(inputs: usize, hidden: usize) -> Self {
        Self {
            w_input: Param::new(Tensor::zeros(&[inputs, 4 * hidden])),
            w_hidden: Param::new(Tensor::zeros(&[hidden, 4 * hidden])),
            bias: Param::new(Tensor::zeros(&[4 * hidden])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_input.value.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.value.shape()[0]
    }

    /// One cell update from an explicit state.
    pub fn cell_step(&self, x_t: &Tensor, h_prev: &Tensor, c_prev: &Tensor) -> Result<(Tensor, Tensor), NnError> {
        let (din, h) = (self.inputs(), self.hidden());
        x_t.expect_rank("lstm x_t", 2)?;
        let batch = x_t.shape()[0];
        x_t.expect_shape("lstm x_t", &[batch, din])?;
        h_prev.expect_shape("lstm h_prev", &[batch, h])?;
        c_prev.expect_shape("lstm c_prev", &[batch, h])?;

        let mut z = vec![0.0; batch * 4 * h];
        for row in z.chunks_mut(4 * h) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(
            batch,
            din,
            4 * h,
            x_t.data(),
            false,
            self.w_input.value.data(),
            false,
            1.0,
            &mut z,
        );
        gemm(
            batch,
            h,
            4 * h,
            h_prev.data(),
            false,
            self.w_hidden.value.data(),
            false,
            1.0,
            &mut z,
        );

        let mut h_t = vec![0.0; batch * h];
        let mut c_t = vec![0.0; batch * h];
        let mut tanh_c = vec![0.0; batch * h];
        cell::forward(h, &mut z, c_prev.data(), &mut c_t, &mut h_t, &mut tanh_c);
        Ok((Tensor::from_vec(&[batch, h], h_t)?, Tensor::from_vec(&[batch, h], c_t)?))
    }

    /// Unrolls over `x: [batch, T, in]` from a zero state.
    ///
    /// Returns `[batch, H]` or `[batch, T, H]` depending on `output`.
    pub fn forward(&self, x: &Tensor, output: SequenceOutput) -> Result<(Tensor, LstmTrace), NnError> {
        x.expect_rank("lstm input", 3)?;
        let (batch, steps, din) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if steps == 0 {
            return Err(NnError::Shape("lstm sequence needs at least one step".into()));
        }
        if din != self.inputs() {
            return Err(NnError::Shape(format!(
                "lstm input {:?} does not match w_input {:?}",
                x.shape(),
                self.w_input.value.shape()
            )));
        }
        let h = self.hidden();
        let inputs = batch_to_time_major(x.data(), batch, steps, din);
        let mut projected = pooled(steps * batch * 4 * h);
        for _ in 0..steps * batch {
            projected.extend_from_slice(self.bias.value.data());
        }
        gemm(
            steps * batch,
            din,
            4 * h,
            &inputs,
            false,
            self.w_input.value.data(),
            false,
            1.0,
            &mut projected,
        );
        let mut trace = self.unroll(batch, steps, Drive::Projected(projected));
        trace.inputs = inputs;
        trace.output = output;

        let out = match output {
            SequenceOutput::LastHidden => Tensor::from_vec(&[batch, h], trace.last_hidden().to_vec())?,
            SequenceOutput::AllHidden => Tensor::from_vec(
                &[batch, steps, h],
                time_to_batch_major(trace.hidden_time_major(), batch, steps, h),
            )?,
        };
        Ok((out, trace))
    }

    /// Backpropagates `grad_out` (shaped like the forward output) through
    /// time, accumulating parameter gradients and returning `dx: [batch, T, in]`.
    pub fn backward(&mut self, trace: &LstmTrace, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (batch, h, din) = (trace.batch, trace.hidden, self.inputs());
        let owned = self.external_grad(trace, grad_out)?;
        let mut dx = vec![0.0; trace.steps * batch * din];
        let Lstm {
            w_input,
            w_hidden,
            bias,
        } = self;
        sweep(
            w_hidden.value.data(),
            trace,
            hidden_grad(trace, grad_out, &owned),
            |t, dz| {
                gemm(
                    h,
                    batch,
                    4 * h,
                    trace.h_prev_at(t),
                    true,
                    dz,
                    false,
                    1.0,
                    w_hidden.grad.data_mut(),
                );
                gemm(
                    din,
                    batch,
                    4 * h,
                    trace.input_at(t, din),
                    true,
                    dz,
                    false,
                    1.0,
                    w_input.grad.data_mut(),
                );
                add_row_sums(dz, 4 * h, bias.grad.data_mut());
                let dx_t = &mut dx[t * batch * din..(t + 1) * batch * din];
                gemm(batch, 4 * h, din, dz, false, w_input.value.data(), true, 0.0, dx_t);
            },
        );
        Tensor::from_vec(
            &[batch, trace.steps, din],
            time_to_batch_major(&dx, batch, trace.steps, din),
        )
    }

    /// `dx` for `grad_out` without touching any parameter gradient.
    pub fn input_gradient(&self, trace: &LstmTrace, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (batch, h, din) = (trace.batch, trace.hidden, self.inputs());
        let owned = self.external_grad(trace, grad_out)?;
        let mut dx = vec![0.0; trace.steps * batch * din];
        sweep(
            self.w_hidden.value.data(),
            trace,
            hidden_grad(trace, grad_out, &owned),
            |t, dz| {
                let dx_t = &mut dx[t * batch * din..(t + 1) * batch * din];
                gemm(batch, 4 * h, din, dz, false, self.w_input.value.data(), true, 0.0, dx_t);
            },
        );
        Tensor::from_vec(
            &[batch, trace.steps, din],
            time_to_batch_major(&dx, batch, trace.steps, din),
        )
    }

    /// Validates `grad_out` against the trace. All-step gradients come back
    /// converted to time-major; a last-step gradient needs no copy.
    fn external_grad(&self, trace: &LstmTrace, grad_out: &Tensor) -> Result<Vec<f64>, NnError> {
        let (batch, steps, h) = (trace.batch, trace.steps, trace.hidden);
        if trace.inputs.len() != steps * batch * self.inputs() {
            return Err(NnError::Shape("lstm trace was not produced by forward()".into()));
        }
        Ok(match trace.output {
            SequenceOutput::LastHidden => {
                grad_out.expect_shape("lstm grad_out", &[batch, h])?;
                Vec::new()
            }
            SequenceOutput::AllHidden => {
                grad_out.expect_shape("lstm grad_out", &[batch, steps, h])?;
                batch_to_time_major(grad_out.data(), batch, steps, h)
            }
        })
    }

    /// Unroll with the same input `x: [batch, in]` fed at every step.
    pub(crate) fn forward_constant(&self, x: &[f64], batch: usize, steps: usize) -> LstmTrace {
        let (din, h) = (self.inputs(), self.hidden());
        let mut pre = vec![0.0; batch * 4 * h];
        gemm(
            batch,
            din,
            4 * h,
            x,
            false,
            self.w_input.value.data(),
            false,
            0.0,
            &mut pre,
        );
        let mut trace = self.unroll(batch, steps, Drive::Constant(&pre));
        trace.output = SequenceOutput::AllHidden;
        trace
    }

    /// Backward for [`Lstm::forward_constant`]. `dh_time_major` is
    /// `[T, B, H]`; returns the gradient w.r.t. the constant input.
    pub(crate) fn backward_constant(&mut self, trace: &LstmTrace, x: &[f64], dh_time_major: &[f64]) -> Vec<f64> {
        let (batch, h, din) = (trace.batch, trace.hidden, self.inputs());
        let mut dz_sum = vec![0.0; batch * 4 * h];
        let Lstm {
            w_input,
            w_hidden,
            bias,
        } = self;
        sweep(
            w_hidden.value.data(),
            trace,
            HiddenGrad::Every(dh_time_major),
            |t, dz| {
                gemm(
                    h,
                    batch,
                    4 * h,
                    trace.h_prev_at(t),
                    true,
                    dz,
                    false,
                    1.0,
                    w_hidden.grad.data_mut(),
                );
                for (a, b) in dz_sum.iter_mut().zip(dz) {
                    *a += b;
                }
            },
        );
        add_row_sums(&dz_sum, 4 * h, bias.grad.data_mut());
        gemm(din, batch, 4 * h, x, true, &dz_sum, false, 1.0, w_input.grad.data_mut());
        let mut dx = vec![0.0; batch * din];
        gemm(
            batch,
            4 * h,
            din,
            &dz_sum,
            false,
            w_input.value.data(),
            true,
            0.0,
            &mut dx,
        );
        dx
    }

    fn unroll(&self, batch: usize, steps: usize, drive: Drive<'_>) -> LstmTrace {
        let h = self.hidden();
        let (bh, bg) = (batch * h, batch * 4 * h);
        let mut hs = pooled_zeros((steps + 1) * bh);
        let mut cs = pooled_zeros((steps + 1) * bh);
        let mut tanh_c = pooled_zeros(steps * bh);
        let bias = self.bias.value.data();
        let w_h = self.w_hidden.value.data();
        let (mut gates, constant) = match drive {
            Drive::Projected(g) => (g, None),
            Drive::Constant(pre) => (pooled_zeros(steps * bg), Some(pre)),
        };

        for t in 0..steps {
            let z = &mut gates[t * bg..(t + 1) * bg];
            if let Some(pre) = constant {
                for (row, src_row) in z.chunks_mut(4 * h).zip(pre.chunks(4 * h)) {
                    for ((v, s), b) in row.iter_mut().zip(src_row).zip(bias) {
                        *v = s + b;
                    }
                }
            }
            let (h_done, h_rest) = hs.split_at_mut((t + 1) * bh);
            gemm(batch, h, 4 * h, &h_done[t * bh..], false, w_h, false, 1.0, z);
            let (c_done, c_rest) = cs.split_at_mut((t + 1) * bh);
            cell::forward(
                h,
                z,
                &c_done[t * bh..],
                &mut c_rest[..bh],
                &mut h_rest[..bh],
                &mut tanh_c[t * bh..(t + 1) * bh],
            );
        }

        LstmTrace {
            batch,
            steps,
            hidden: h,
            output: SequenceOutput::AllHidden,
            inputs: Vec::new(),
            hs,
            cs,
            gates,
            tanh_c,
        }
    }
}

fn hidden_grad<'a>(trace: &LstmTrace, grad_out: &'a Tensor, time_major: &'a [f64]) -> HiddenGrad<'a> {
    match trace.output {
        SequenceOutput::LastHidden => HiddenGrad::Last(grad_out.data()),
        SequenceOutput::AllHidden => HiddenGrad::Every(time_major),
    }
}

/// Backward sweep from the last step to the first. `each(t, dz_t)` receives
/// the gate pre-activation gradients `[B, 4H]` of step `t`.
fn sweep(w_h: &[f64], trace: &LstmTrace, dh_ext: HiddenGrad<'_>, mut each: impl FnMut(usize, &[f64])) {
    let (batch, steps, h) = (trace.batch, trace.steps, trace.hidden);
    let (bh, bg) = (batch * h, batch * 4 * h);
    let mut dz = vec![0.0; bg];
    let mut dh = vec![0.0; bh];
    let mut dh_next = vec![0.0; bh];
    let mut dc = vec![0.0; bh];

    for t in (0..steps).rev() {
        match dh_ext.at(t, steps, bh) {
            Some(ext) => {
                for ((d, a), b) in dh.iter_mut().zip(ext).zip(&dh_next) {
                    *d = a + b;
                }
            }
            None => dh.copy_from_slice(&dh_next),
        }
        cell::backward(
            h,
            &trace.gates[t * bg..(t + 1) * bg],
            &trace.cs[t * bh..(t + 1) * bh],
            &trace.tanh_c[t * bh..(t + 1) * bh],
            &dh,
            &mut dc,
            &mut dz,
        );
        each(t, &dz);
        if t > 0 {
            gemm(batch, 4 * h, h, &dz, false, w_h, true, 0.0, &mut dh_next);
        }
    }
}

fn add_row_sums(rows: &[f64], width: usize, acc: &mut [f64]) {
    for row in rows.chunks(width) {
        for (a, b) in acc.iter_mut().zip(row) {
            *a += b;
        }
    }
}

impl Module for Lstm {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("w_input", &self.w_input);
        f("w_hidden", &self.w_hidden);
        f("bias", &self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("w_input", &mut self.w_input);
        f("w_hidden", &mut self.w_hidden);
        f("bias", &mut self.bias);
    }
}

/// `[B, T, D]` → `[T, B, D]`
pub(crate) fn batch_to_time_major(x: &[f64], batch: usize, steps: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for t in 0..steps {
            let src = (b * steps + t) * dim;
            let dst = (t * batch + b) * dim;
            out[dst..dst + dim].copy_from_slice(&x[src..src + dim]);
        }
    }
    out
}

/// `[T, B, D]` → `[B, T, D]`
pub(crate) fn time_to_batch_major(x: &[f64], batch: usize, steps: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for t in 0..steps {
        for b in 0..batch {
            let src = (t * batch + b) * dim;
            let dst = (b * steps + t) * dim;
            out[dst..dst + dim].copy_from_slice(&x[src..src + dim]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_zero_state_stay_zero() {
        let cell = Lstm::zeroed(3, 4);
        let x = Tensor::full(&[2, 3], 0.7);
        let (h, c) = cell
            .cell_step(&x, &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[2, 4]))
            .unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_halve_the_cell_state() {
        let cell = Lstm::zeroed(2, 3);
        let c_prev = Tensor::from_vec(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let (_, c) = cell
            .cell_step(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 3]), &c_prev)
            .unwrap();
        for (a, b) in c.data().iter().zip(c_prev.data()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn single_step_sequence_equals_cell_step() {
        let mut rng = crate::rng::seeded(11);
        let lstm = Lstm::new(3, 4, &mut rng);
        let x = Tensor::from_vec(&[2, 1, 3], vec![0.1, -0.4, 0.9, 0.3, 0.2, -0.7]).unwrap();
        let (seq, _) = lstm.forward(&x, SequenceOutput::LastHidden).unwrap();
        let x_t = x.clone().reshape(&[2, 3]).unwrap();
        let zeros = Tensor::zeros(&[2, 4]);
        let (h, _) = lstm.cell_step(&x_t, &zeros, &zeros).unwrap();
        for (a, b) in seq.data().iter().zip(h.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn unroll_matches_repeated_cell_steps() {
        let mut rng = crate::rng::seeded(12);
        let lstm = Lstm::new(2, 3, &mut rng);
        let (batch, steps) = (2, 6);
        let data: Vec<f64> = (0..batch * steps * 2).map(|i| (i as f64 * 0.61).sin()).collect();
        let x = Tensor::from_vec(&[batch, steps, 2], data.clone()).unwrap();
        let (all, _) = lstm.forward(&x, SequenceOutput::AllHidden).unwrap();
        assert_eq!(all.shape(), &[batch, steps, 3]);

        let mut h = Tensor::zeros(&[batch, 3]);
        let mut c = Tensor::zeros(&[batch, 3]);
        for t in 0..steps {
            let mut xt = Vec::new();
            for b in 0..batch {
                xt.extend_from_slice(&data[(b * steps + t) * 2..(b * steps + t) * 2 + 2]);
            }
            let (h2, c2) = lstm
                .cell_step(&Tensor::from_vec(&[batch, 2], xt).unwrap(), &h, &c)
                .unwrap();
            h = h2;
            c = c2;
            for b in 0..batch {
                for j in 0..3 {
                    let a = all.data()[(b * steps + t) * 3 + j];
                    assert!((a - h.data()[b * 3 + j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn empty_sequence_is_a_shape_error() {
        let lstm = Lstm::zeroed(1, 2);
        assert!(matches!(
            lstm.forward(&Tensor::zeros(&[1, 0, 1]), SequenceOutput::LastHidden),
            Err(NnError::Shape(_))
        ));
    }

    #[test]
    fn input_gradient_leaves_parameters_alone() {
        let mut rng = crate::rng::seeded(31);
        let mut lstm = Lstm::new(2, 3, &mut rng);
        let x = Tensor::from_vec(&[2, 4, 2], (0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let (_, trace) = lstm.forward(&x, SequenceOutput::LastHidden).unwrap();
        let g = Tensor::full(&[2, 3], 0.5);
        let dx_only = lstm.input_gradient(&trace, &g).unwrap();
        assert!(lstm.flat_grads().iter().all(|&v| v == 0.0));
        let dx = lstm.backward(&trace, &g).unwrap();
        assert_eq!(dx, dx_only);
        assert!(lstm.flat_grads().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn constant_drive_matches_broadcast_input() {
        let mut rng = crate::rng::seeded(13);
        let mut a = Lstm::new(3, 4, &mut rng);
        let mut b = a.clone();
        let (batch, steps) = (2, 5);
        let x: Vec<f64> = (0..batch * 3).map(|i| (i as f64).cos()).collect();
        let mut seq = Vec::new();
        for bi in 0..batch {
            for _ in 0..steps {
                seq.extend_from_slice(&x[bi * 3..bi * 3 + 3]);
            }
        }
        let xs = Tensor::from_vec(&[batch, steps, 3], seq).unwrap();
        let (out, trace_a) = a.forward(&xs, SequenceOutput::AllHidden).unwrap();
        let trace_b = b.forward_constant(&x, batch, steps);
        let tm = batch_to_time_major(out.data(), batch, steps, 4);
        for (p, q) in tm.iter().zip(trace_b.hidden_time_major()) {
            assert!((p - q).abs() < 1e-14);
        }

        let dh: Vec<f64> = (0..batch * steps * 4).map(|i| (i as f64 * 0.3).sin()).collect();
        let dx = a
            .backward(&trace_a, &Tensor::from_vec(&[batch, steps, 4], dh.clone()).unwrap())
            .unwrap();
        let dx_const = b.backward_constant(&trace_b, &x, &batch_to_time_major(&dh, batch, steps, 4));
        for bi in 0..batch {
            for k in 0..3 {
                let summed: f64 = (0..steps).map(|t| dx.data()[(bi * steps + t) * 3 + k]).sum();
                assert!((summed - dx_const[bi * 3 + k]).abs() < 1e-12);
            }
        }
        for (p, q) in a.flat_grads().iter().zip(b.flat_grads()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
