//! Randomized gradient-fidelity sweeps.
//!
//! Each sweep draws small random instances of one kernel, reduces its
//! output to a scalar with random weights `r` (so `f = Σ r ⊙ y` and the
//! upstream gradient is exactly `r`), and compares the analytic backward
//! pass against central differences of the forward pass alone.

use rand::Rng as _;

use super::{
    bce_loss, cross_entropy_loss, grad_check, grad_check_weighted, Conv1d, Dense, GradCheckReport, Lstm, MaxPool1d,
    Module, NnError, SequenceOutput, Tensor,
};
use crate::rng::{seeded, Rng};

/// Tolerance for feed-forward kernels and losses.
pub const FEEDFORWARD_TOL: f64 = 1e-6;
/// Tolerance for recurrent kernels.
pub const RECURRENT_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    Dense,
    Conv1d,
    MaxPool,
    LstmCell,
    LstmSequence,
    Bce,
    CrossEntropy,
}

impl Kernel {
    pub const ALL: [Kernel; 7] = [
        Kernel::Dense,
        Kernel::Conv1d,
        Kernel::MaxPool,
        Kernel::LstmCell,
        Kernel::LstmSequence,
        Kernel::Bce,
        Kernel::CrossEntropy,
    ];

    pub fn tolerance(self) -> f64 {
        match self {
            Kernel::LstmCell | Kernel::LstmSequence => RECURRENT_TOL,
            _ => FEEDFORWARD_TOL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Dense => "dense",
            Kernel::Conv1d => "conv1d",
            Kernel::MaxPool => "maxpool routing",
            Kernel::LstmCell => "lstm cell (5-step bptt)",
            Kernel::LstmSequence => "lstm sequence (8 steps)",
            Kernel::Bce => "bce",
            Kernel::CrossEntropy => "cross-entropy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepReport {
    pub kernel: Kernel,
    pub trials: usize,
    /// Instances redrawn because a gradient component was below
    /// [`RESOLVABLE_GRAD`].
    pub redrawn: usize,
    pub max_rel_error: f64,
}

/// Runs `trials` random instances; fails on the first out-of-tolerance
/// coordinate.
pub fn sweep(kernel: Kernel, trials: usize, seed: u64) -> Result<SweepReport, NnError> {
    let mut rng = seeded(seed);
    let tol = kernel.tolerance();
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    let mut redrawn = 0;
    while accepted < trials {
        let outcome = match kernel {
            Kernel::Dense => check_dense(&mut rng, tol)?,
            Kernel::Conv1d => check_conv(&mut rng, tol)?,
            Kernel::MaxPool => check_pool(&mut rng, tol)?,
            Kernel::LstmCell => {
                let hidden = rng_range(&mut rng, 1, 4);
                check_lstm(&mut rng, 5, hidden, SequenceOutput::LastHidden, tol)?
            }
            Kernel::LstmSequence => check_lstm(&mut rng, 8, 4, SequenceOutput::AllHidden, tol)?,
            Kernel::Bce => check_bce(&mut rng, tol)?,
            Kernel::CrossEntropy => check_cross_entropy(&mut rng, tol)?,
        };
        match outcome {
            Some(report) => {
                worst = worst.max(report.max_rel_error);
                accepted += 1;
            }
            None => {
                redrawn += 1;
                if redrawn > 10 * trials {
                    return Err(NnError::Shape(format!(
                        "{}: too many instances below the resolvable gradient floor",
                        kernel.name()
                    )));
                }
            }
        }
    }
    Ok(SweepReport {
        kernel,
        trials,
        redrawn,
        max_rel_error: worst,
    })
}

type Outcome = Result<Option<GradCheckReport>, NnError>;

/// Exact zeros are structural (e.g. non-argmax pool slots) and are kept.
fn resolvable(analytic: &[f64]) -> bool {
    analytic.iter().all(|&a| a == 0.0 || a.abs() >= RESOLVABLE_GRAD)
}

fn rng_range(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

const PARAM_SCALE: f64 = 1.0;

/// Smallest analytic gradient magnitude the check can resolve. Forward
/// roundoff is about 1e-16, so central differences at `FD_STEP` carry
/// 1e-11 to 5e-11 absolute noise; components below this floor cannot meet
/// the 1e-6 / 1e-5 relative tolerances even for an exact kernel, and instances containing
/// one are redrawn.
pub const RESOLVABLE_GRAD: f64 = 1e-5;

/// Smallest gap between a window's max and its runner-up for a pooling
/// instance to count as differentiable under a ±`FD_STEP` perturbation.
const POOL_MIN_GAP: f64 = 1e-3;

/// Random signs, magnitudes in `[0.1·scale, scale]`. Keeping entries away
/// from zero keeps true gradients above the finite-difference noise floor
/// (about `1e-16·|f| / step`).
fn random_tensor(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.random_range(0.1 * scale..scale);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape")
}

/// Checks parameter gradients (flattened in visiting order) followed by
/// input gradients.
fn check_module<M, F, B>(rng: &mut Rng, module: &mut M, x: &Tensor, forward: F, backward: B, tol: f64) -> Outcome
where
    M: Module + Clone,
    F: Fn(&M, &Tensor) -> Tensor,
    B: Fn(&mut M, &Tensor, &Tensor) -> Tensor,
{
    module.visit_params_mut(&mut |_, p| {
        let shape = p.value.shape().to_vec();
        p.value = random_tensor(rng, &shape, PARAM_SCALE);
    });
    let probe = forward(module, x);
    let r = random_tensor(rng, probe.shape(), 1.5);
    module.zero_grad();
    let dx = backward(module, x, &r);
    let mut analytic = module.flat_grads();
    analytic.extend_from_slice(dx.data());
    if !resolvable(&analytic) {
        return Ok(None);
    }
    let mut point = module.flat_params();
    let n_params = point.len();
    point.extend_from_slice(x.data());

    let template = module.clone();
    let shape = x.shape().to_vec();
    let outputs = |v: &[f64]| {
        let mut m = template.clone();
        m.set_flat_params(&v[..n_params]);
        let xi = Tensor::from_vec(&shape, v[n_params..].to_vec()).expect("shape");
        forward(&m, &xi).into_vec()
    };
    grad_check_weighted(outputs, r.data(), &point, &analytic, tol).map(Some)
}

fn check_dense(rng: &mut Rng, tol: f64) -> Outcome {
    let (batch, din, dout) = (rng_range(rng, 1, 4), rng_range(rng, 1, 5), rng_range(rng, 1, 4));
    let mut layer = Dense::new(din, dout, rng);
    let x = random_tensor(rng, &[batch, din], 1.0);
    check_module(
        rng,
        &mut layer,
        &x,
        |m, x| m.forward(x).expect("dense forward"),
        |m, x, r| m.backward(x, r).expect("dense backward"),
        tol,
    )
}

fn check_conv(rng: &mut Rng, tol: f64) -> Outcome {
    let (batch, cin, cout, k) = (
        rng_range(rng, 1, 3),
        rng_range(rng, 1, 3),
        rng_range(rng, 1, 3),
        rng_range(rng, 1, 4),
    );
    let len = k + rng_range(rng, 0, 6);
    let mut conv = Conv1d::new(cin, cout, k, rng);
    let x = random_tensor(rng, &[batch, cin, len], 1.0);
    check_module(
        rng,
        &mut conv,
        &x,
        |m, x| m.forward(x).expect("conv forward"),
        |m, x, r| m.backward(x, r).expect("conv backward"),
        tol,
    )
}

fn check_pool(rng: &mut Rng, tol: f64) -> Outcome {
    let window = rng_range(rng, 1, 3);
    let (batch, chans) = (rng_range(rng, 1, 3), rng_range(rng, 1, 3));
    let len = window * rng_range(rng, 1, 4) + rng_range(rng, 0, window - 1);
    let pool = MaxPool1d::new(window)?;
    let x = loop {
        let candidate = random_tensor(rng, &[batch, chans, len], 1.0);
        if pool_is_differentiable(&candidate, window) {
            break candidate;
        }
    };
    let (y, cache) = pool.forward(&x)?;
    let r = random_tensor(rng, y.shape(), 1.0);
    let dx = pool.backward(&cache, &r)?;
    if !resolvable(dx.data()) {
        return Ok(None);
    }
    let shape = x.shape().to_vec();
    grad_check_weighted(
        |v| {
            let xi = Tensor::from_vec(&shape, v.to_vec()).expect("shape");
            pool.forward(&xi).expect("pool").0.into_vec()
        },
        r.data(),
        x.data(),
        dx.data(),
        tol,
    )
    .map(Some)
}

fn pool_is_differentiable(x: &Tensor, window: usize) -> bool {
    let len = x.shape()[2];
    x.data().chunks(len).all(|row| {
        row[..len / window * window].chunks(window).all(|w| {
            let mut sorted = w.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted.len() < 2 || sorted[0] - sorted[1] > POOL_MIN_GAP
        })
    })
}

fn check_lstm(rng: &mut Rng, steps: usize, hidden: usize, output: SequenceOutput, tol: f64) -> Outcome {
    let (batch, din) = (rng_range(rng, 1, 3), rng_range(rng, 1, 3));
    let mut lstm = Lstm::new(din, hidden, rng);
    let x = random_tensor(rng, &[batch, steps, din], 1.0);
    check_module(
        rng,
        &mut lstm,
        &x,
        |m, x| m.forward(x, output).expect("lstm forward").0,
        |m, x, r| {
            let (_, trace) = m.forward(x, output).expect("lstm forward");
            m.backward(&trace, r).expect("lstm backward")
        },
        tol,
    )
}

fn check_bce(rng: &mut Rng, tol: f64) -> Outcome {
    let n = rng_range(rng, 1, 8);
    let p = Tensor::from_vec(&[n], (0..n).map(|_| rng.random_range(0.05..0.95)).collect())?;
    let t = Tensor::from_vec(&[n], (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect())?;
    let (_, grad) = bce_loss(&p, &t)?;
    if !resolvable(grad.data()) {
        return Ok(None);
    }
    grad_check(
        |v| {
            bce_loss(&Tensor::from_vec(&[n], v.to_vec()).expect("shape"), &t)
                .expect("bce")
                .0
        },
        p.data(),
        grad.data(),
        tol,
    )
    .map(Some)
}

fn check_cross_entropy(rng: &mut Rng, tol: f64) -> Outcome {
    let (batch, classes) = (4, 5);
    let logits = random_tensor(rng, &[batch, classes], 3.0);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let (_, grad) = cross_entropy_loss(&logits, &labels)?;
    if !resolvable(grad.data()) {
        return Ok(None);
    }
    grad_check(
        |v| {
            cross_entropy_loss(
                &Tensor::from_vec(&[batch, classes], v.to_vec()).expect("shape"),
                &labels,
            )
            .expect("ce")
            .0
        },
        logits.data(),
        grad.data(),
        tol,
    )
    .map(Some)
}
