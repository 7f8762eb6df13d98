use std::collections::BTreeMap;
use std::path::Path;

use super::{ClassifierError, CnnConfig, StageWidths};
use crate::data::BEAT_LEN;
use crate::nncore::checkpoint::Checkpoint;
use crate::nncore::{
    relu, visit_prefixed, visit_prefixed_mut, Conv1d, Dense, MaxPool1d, Module, NnError, Param, PoolCache, Tensor,
};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub dense1: Dense,
    pub dense2: Dense,
    pool: MaxPool1d,
    widths: StageWidths,
}

/// Intermediate activations kept for the backward pass.
pub struct CnnCache {
    input: Tensor,
    conv1: Tensor,
    pool1: PoolCache,
    pooled1: Tensor,
    conv2: Tensor,
    pool2: PoolCache,
    flat: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
}

fn relu_of(x: &Tensor) -> Tensor {
    x.map(relu)
}

/// Zeroes `grad` where the pre-activation was not positive.
fn relu_mask(pre: &Tensor, mut grad: Tensor) -> Tensor {
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

impl CnnModel {
    /// Seeded initialization from `config.seed`.
    pub fn init(config: CnnConfig) -> Result<Self, ClassifierError> {
        let widths = config.validate()?;
        let rng = &mut seeded(config.seed);
        let conv1 = Conv1d::new(1, config.conv1_filters, config.kernel, rng);
        let conv2 = Conv1d::new(config.conv1_filters, config.conv2_filters, config.kernel, rng);
        let dense1 = Dense::new(widths.flatten, config.hidden, rng);
        let dense2 = Dense::new(config.hidden, config.classes(), rng);
        Ok(Self {
            config,
            conv1,
            conv2,
            dense1,
            dense2,
            pool: MaxPool1d::new(config.pool)?,
            widths,
        })
    }

    pub fn widths(&self) -> StageWidths {
        self.widths
    }

    /// Logits `[B, 5]` for `x: [B, 1, 187]` or `[B, 187]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, ClassifierError> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, CnnCache), ClassifierError> {
        let batch = x.shape().first().copied().unwrap_or(0);
        let input = match x.shape() {
            [_, 1, BEAT_LEN] => x.clone(),
            [_, BEAT_LEN] => x.clone().reshape(&[batch, 1, BEAT_LEN])?,
            other => {
                return Err(NnError::Shape(format!("classifier input {other:?}, expected [B, 1, {BEAT_LEN}]")).into())
            }
        };
        let conv1 = self.conv1.forward(&input)?;
        let (pooled1, pool1) = self.pool.forward(&relu_of(&conv1))?;
        let conv2 = self.conv2.forward(&pooled1)?;
        let (pooled2, pool2) = self.pool.forward(&relu_of(&conv2))?;
        debug_assert_eq!(pooled2.shape(), &[batch, self.config.conv2_filters, self.widths.pool2]);
        let flat = pooled2.reshape(&[batch, self.widths.flatten])?;
        let hidden_pre = self.dense1.forward(&flat)?;
        let hidden = relu_of(&hidden_pre);
        let logits = self.dense2.forward(&hidden)?;
        let cache = CnnCache {
            input,
            conv1,
            pool1,
            pooled1,
            conv2,
            pool2,
            flat,
            hidden_pre,
            hidden,
        };
        Ok((logits, cache))
    }

    /// Accumulates parameter gradients for `grad_logits: [B, 5]`.
    pub fn backward(&mut self, cache: &CnnCache, grad_logits: &Tensor) -> Result<(), ClassifierError> {
        let batch = cache.flat.shape()[0];
        let d_hidden = self.dense2.backward(&cache.hidden, grad_logits)?;
        let d_flat = self
            .dense1
            .backward(&cache.flat, &relu_mask(&cache.hidden_pre, d_hidden))?;
        let d_pooled2 = d_flat.reshape(&[batch, self.config.conv2_filters, self.widths.pool2])?;
        let d_conv2 = relu_mask(&cache.conv2, self.pool.backward(&cache.pool2, &d_pooled2)?);
        let d_pooled1 = self.conv2.backward(&cache.pooled1, &d_conv2)?;
        let d_conv1 = relu_mask(&cache.conv1, self.pool.backward(&cache.pool1, &d_pooled1)?);
        self.conv1.backward(&cache.input, &d_conv1)?;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let meta: BTreeMap<String, String> = [
            ("kind", "cnn".to_string()),
            ("conv1_filters", c.conv1_filters.to_string()),
            ("conv2_filters", c.conv2_filters.to_string()),
            ("kernel", c.kernel.to_string()),
            ("pool", c.pool.to_string()),
            ("hidden", c.hidden.to_string()),
            ("batch_size", c.batch_size.to_string()),
            ("epochs", c.epochs.to_string()),
            ("lr", c.lr.to_string()),
            ("seed", c.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Checkpoint::from_module(self, meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ClassifierError> {
        if ckpt.meta_value("kind")? != "cnn" {
            return Err(ClassifierError::Config("checkpoint is not a CNN classifier".into()));
        }
        let config = CnnConfig {
            conv1_filters: ckpt.meta_parse("conv1_filters")?,
            conv2_filters: ckpt.meta_parse("conv2_filters")?,
            kernel: ckpt.meta_parse("kernel")?,
            pool: ckpt.meta_parse("pool")?,
            hidden: ckpt.meta_parse("hidden")?,
            batch_size: ckpt.meta_parse("batch_size")?,
            epochs: ckpt.meta_parse("epochs")?,
            lr: ckpt.meta_parse("lr")?,
            seed: ckpt.meta_parse("seed")?,
        };
        let mut model = Self::init(config)?;
        ckpt.load_into(&mut model)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        Ok(self.checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Module for CnnModel {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        visit_prefixed("conv1", &self.conv1, f);
        visit_prefixed("conv2", &self.conv2, f);
        visit_prefixed("dense1", &self.dense1, f);
        visit_prefixed("dense2", &self.dense2, f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        visit_prefixed_mut("conv1", &mut self.conv1, f);
        visit_prefixed_mut("conv2", &mut self.conv2, f);
        visit_prefixed_mut("dense1", &mut self.dense1, f);
        visit_prefixed_mut("dense2", &mut self.dense2, f);
    }
}
