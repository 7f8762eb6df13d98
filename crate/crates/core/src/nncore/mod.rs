//! Minimal dense-tensor numeric kernel.
//!
//! Layers carry their own parameters and gradient buffers and expose
//! hand-derived `forward`/`backward` pairs. There is no tape: a forward
//! pass returns a cache that the caller hands back to `backward`.

mod activation;
mod adam;
mod cell;
pub mod checkpoint;
mod conv;
mod dense;
pub mod fidelity;
mod gradcheck;
mod loss;
mod lstm;
mod tensor;

pub use activation::{activation, exp, relu, sigmoid, softmax_rows, tanh, Activation};
pub use adam::{AdamConfig, AdamState};
pub use conv::{Conv1d, MaxPool1d, PoolCache};
pub use dense::Dense;
pub use gradcheck::{
    central_difference, central_difference_weighted, grad_check, grad_check_weighted, relative_error, GradCheckReport,
    FD_STEP,
};
pub use loss::{bce_loss, cross_entropy_loss, BCE_EPS};
pub use lstm::{Lstm, LstmTrace, SequenceOutput};
pub use tensor::Tensor;

pub(crate) use lstm::{batch_to_time_major, time_to_batch_major};
pub(crate) use tensor::gemm;

use rand::Rng as _;
use sha2::{Digest, Sha256};

use crate::rng::Rng;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("gradient check failed at parameter index {index}: analytic {analytic}, numeric {numeric}, relative error {rel_error:e} > {tolerance:e}")]
    GradCheck {
        index: usize,
        analytic: f64,
        numeric: f64,
        rel_error: f64,
        tolerance: f64,
    },
}

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    /// Uniform in `±1/√fan_in`.
    pub fn uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(Tensor::from_vec(shape, data).expect("shape product matches"))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that owns named parameters.
pub trait Module {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |_, p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.value.len());
        n
    }

    /// SHA-256 over parameter names, shapes and little-endian value bytes.
    fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        self.visit_params(&mut |name, p| {
            hasher.update(name.as_bytes());
            for &d in p.value.shape() {
                hasher.update((d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                hasher.update(v.to_le_bytes());
            }
        });
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Flat copy of every parameter value in visiting order.
    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p| out.extend_from_slice(p.value.data()));
        out
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p| out.extend_from_slice(p.grad.data()));
        out
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_params_mut(&mut |_, p| {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }
}

pub(crate) fn visit_prefixed(prefix: &str, m: &dyn Module, f: &mut dyn FnMut(&str, &Param)) {
    m.visit_params(&mut |n, p| f(&format!("{prefix}.{n}"), p));
}

pub(crate) fn visit_prefixed_mut(prefix: &str, m: &mut dyn Module, f: &mut dyn FnMut(&str, &mut Param)) {
    m.visit_params_mut(&mut |n, p| f(&format!("{prefix}.{n}"), p));
}
