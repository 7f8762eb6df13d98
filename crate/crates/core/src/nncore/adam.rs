use serde::{Deserialize, Serialize};

use super::{Module, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Defaults used for the classifier.
    pub fn classifier() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Defaults used for both adversarial networks.
    pub fn adversarial() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for every parameter of one module, in visiting order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new<M: Module + ?Sized>(config: AdamConfig, module: &M) -> Self {
        let mut first = Vec::new();
        module.visit_params(&mut |_, p| first.push(Tensor::zeros(p.value.shape())));
        let second = first.clone();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    /// One bias-corrected Adam update from the gradients currently
    /// accumulated in `module`. Gradients are left untouched.
    pub fn step<M: Module + ?Sized>(&mut self, module: &mut M) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let correct1 = 1.0 - beta1.powi(t);
        let correct2 = 1.0 - beta2.powi(t);
        let mut idx = 0;
        let (first, second) = (&mut self.first, &mut self.second);
        module.visit_params_mut(&mut |_, p| {
            let m = first[idx].data_mut();
            let v = second[idx].data_mut();
            assert_eq!(m.len(), p.value.len(), "adam moment shape drifted from parameter");
            let grads = p.grad.data();
            for (((w, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grads)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / correct1;
                let v_hat = *v / correct2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            idx += 1;
        });
    }
}
