use super::{NnError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    /// Row-wise softmax over a rank-2 tensor.
    SoftmaxRows,
}

/// `eˣ` without branches or library calls, so loops over slices
/// vectorize. Inputs are clamped to `[-708, 709]`; relative error is within
/// a few ulp of `f64::exp` over that range.
#[inline]
pub fn exp(x: f64) -> f64 {
    const ROUND: f64 = 6_755_399_441_055_744.0;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = x.clamp(-708.0, 709.0);
    let shifted = x * std::f64::consts::LOG2_E + ROUND;
    let k = shifted - ROUND;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Taylor series of eʳ for |r| ≤ ln2/2 (truncation below 1e-17),
    // evaluated with Estrin's scheme to keep the dependency chain short.
    const C: [f64; 14] = [
        1.0,
        1.0,
        0.5,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5_040.0,
        1.0 / 40_320.0,
        1.0 / 362_880.0,
        1.0 / 3_628_800.0,
        1.0 / 39_916_800.0,
        1.0 / 479_001_600.0,
        1.0 / 6_227_020_800.0,
    ];
    let r2 = r * r;
    let r4 = r2 * r2;
    let r8 = r4 * r4;
    let pair = |i: usize| C[i] + C[i + 1] * r;
    let low = (pair(0) + r2 * pair(2)) + r4 * (pair(4) + r2 * pair(6));
    let high = (pair(8) + r2 * pair(10)) + r4 * pair(12);
    let p = low + r8 * high;
    let k_int = shifted.to_bits().wrapping_sub(ROUND.to_bits()) as i64;
    p * f64::from_bits(((k_int + 1023) as u64) << 52)
}

/// Overflow-safe logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let e = exp(-x.abs());
    let s = 1.0 / (1.0 + e);
    if x >= 0.0 {
        s
    } else {
        e * s
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    let e = exp(-2.0 * x.abs());
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Shifted softmax applied to every row of a `[rows, cols]` tensor.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor, NnError> {
    x.expect_rank("softmax_rows", 2)?;
    let cols = x.shape()[1];
    let mut out = x.clone();
    if cols == 0 {
        return Ok(out);
    }
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

pub fn activation(kind: Activation, x: &Tensor) -> Result<Tensor, NnError> {
    Ok(match kind {
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Tanh => x.map(tanh),
        Activation::Relu => x.map(relu),
        Activation::SoftmaxRows => softmax_rows(x)?,
    })
}
