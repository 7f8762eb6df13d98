use std::collections::BTreeMap;
use std::path::Path;

use super::{GanConfig, GanError};
use crate::data::NUM_CLASSES;
use crate::nncore::checkpoint::Checkpoint;
use crate::nncore::{
    batch_to_time_major, bce_loss, sigmoid, time_to_batch_major, Dense, Lstm, LstmTrace, Module, NnError, Param,
    SequenceOutput, Tensor,
};
use crate::nncore::{visit_prefixed, visit_prefixed_mut};
use crate::rng::{seeded, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    /// `[L, P]`
    pub projection: Dense,
    pub lstm: Lstm,
    /// `[H, 1]`, shared across steps
    pub head: Dense,
    steps: usize,
}

pub(crate) struct GeneratorCache {
    batch: usize,
    z: Vec<f64>,
    projected: Vec<f64>,
    trace: LstmTrace,
    /// Sigmoid outputs, time-major `[T, B]`.
    out: Vec<f64>,
}

impl Generator {
    pub fn new(cfg: &GanConfig, rng: &mut Rng) -> Self {
        Self {
            projection: Dense::new(cfg.latent_dim, cfg.projection, rng),
            lstm: Lstm::new(cfg.projection, cfg.hidden, rng),
            head: Dense::new(cfg.hidden, 1, rng),
            steps: cfg.seq_len,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.projection.inputs()
    }

    /// `z: [B, L]` to beats `[B, T]` in `(0, 1)`.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward_cached(z)?.0)
    }

    pub(crate) fn forward_cached(&self, z: &Tensor) -> Result<(Tensor, GeneratorCache), NnError> {
        z.expect_rank("latent", 2)?;
        let batch = z.shape()[0];
        let projected = self.projection.forward(z)?.into_vec();
        let trace = self.lstm.forward_constant(&projected, batch, self.steps);
        let out: Vec<f64> = self
            .head
            .forward_raw(self.steps * batch, trace.hidden_time_major())
            .into_iter()
            .map(sigmoid)
            .collect();
        let beats = Tensor::from_vec(&[batch, self.steps], time_to_batch_major(&out, batch, self.steps, 1))?;
        let cache = GeneratorCache {
            batch,
            z: z.data().to_vec(),
            projected,
            trace,
            out,
        };
        Ok((beats, cache))
    }

    /// Accumulates parameter gradients for `grad_out: [B, T]` and returns
    /// the gradient with respect to `z`.
    pub(crate) fn backward(&mut self, cache: &GeneratorCache, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (batch, steps) = (cache.batch, self.steps);
        grad_out.expect_shape("generator grad_out", &[batch, steps])?;
        let dy = batch_to_time_major(grad_out.data(), batch, steps, 1);
        let dlogit: Vec<f64> = dy.iter().zip(&cache.out).map(|(g, s)| g * s * (1.0 - s)).collect();
        let dh = self
            .head
            .backward_raw(steps * batch, cache.trace.hidden_time_major(), &dlogit, true);
        let dproj = self.lstm.backward_constant(&cache.trace, &cache.projected, &dh);
        let dz = self.projection.backward_raw(batch, &cache.z, &dproj, true);
        Tensor::from_vec(&[batch, self.latent_dim()], dz)
    }
}

impl Module for Generator {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        visit_prefixed("projection", &self.projection, f);
        visit_prefixed("lstm", &self.lstm, f);
        visit_prefixed("head", &self.head, f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        visit_prefixed_mut("projection", &mut self.projection, f);
        visit_prefixed_mut("lstm", &mut self.lstm, f);
        visit_prefixed_mut("head", &mut self.head, f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub lstm: Lstm,
    /// `[H, 1]`
    pub head: Dense,
}

pub(crate) struct DiscriminatorCache {
    batch: usize,
    steps: usize,
    trace: LstmTrace,
    last: Tensor,
    p: Vec<f64>,
}

impl Discriminator {
    pub fn new(cfg: &GanConfig, rng: &mut Rng) -> Self {
        Self {
            lstm: Lstm::new(1, cfg.hidden, rng),
            head: Dense::new(cfg.hidden, 1, rng),
        }
    }

    /// Beats `[B, T]` to realness scores `[B, 1]` in `(0, 1)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward_cached(x)?.0)
    }

    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, DiscriminatorCache), NnError> {
        x.expect_rank("discriminator input", 2)?;
        let (batch, steps) = (x.shape()[0], x.shape()[1]);
        let seq = x.clone().reshape(&[batch, steps, 1])?;
        let (last, trace) = self.lstm.forward(&seq, SequenceOutput::LastHidden)?;
        let p: Vec<f64> = self.head.forward(&last)?.into_vec().into_iter().map(sigmoid).collect();
        let scores = Tensor::from_vec(&[batch, 1], p.clone())?;
        Ok((
            scores,
            DiscriminatorCache {
                batch,
                steps,
                trace,
                last,
                p,
            },
        ))
    }

    /// Accumulates parameter gradients for `grad_out: [B, 1]` and returns
    /// the gradient with respect to the input beats.
    pub(crate) fn backward(&mut self, cache: &DiscriminatorCache, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let dlogit = self.logit_grad(cache, grad_out)?;
        let dlast = self.head.backward(&cache.last, &dlogit)?;
        let dx = self.lstm.backward(&cache.trace, &dlast)?;
        dx.reshape(&[cache.batch, cache.steps])
    }

    /// Gradient with respect to the input beats only; parameter gradients
    /// are left untouched.
    pub(crate) fn input_gradient(&self, cache: &DiscriminatorCache, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let dlogit = self.logit_grad(cache, grad_out)?;
        let dlast = Tensor::from_vec(
            &[cache.batch, self.head.inputs()],
            self.head.input_grad_raw(cache.batch, dlogit.data()),
        )?;
        let dx = self.lstm.input_gradient(&cache.trace, &dlast)?;
        dx.reshape(&[cache.batch, cache.steps])
    }

    fn logit_grad(&self, cache: &DiscriminatorCache, grad_out: &Tensor) -> Result<Tensor, NnError> {
        grad_out.expect_shape("discriminator grad_out", &[cache.batch, 1])?;
        let dlogit = grad_out
            .data()
            .iter()
            .zip(&cache.p)
            .map(|(g, s)| g * s * (1.0 - s))
            .collect();
        Tensor::from_vec(&[cache.batch, 1], dlogit)
    }
}

impl Module for Discriminator {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        visit_prefixed("lstm", &self.lstm, f);
        visit_prefixed("head", &self.head, f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        visit_prefixed_mut("lstm", &mut self.lstm, f);
        visit_prefixed_mut("head", &mut self.head, f);
    }
}

/// A generator/discriminator pair trained on one class.
#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub class: u8,
    pub config: GanConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl GanModel {
    /// Seeded initialization from `config.seed`.
    pub fn init(class: u8, config: GanConfig) -> Result<Self, GanError> {
        Self::init_from(class, config, &mut seeded(config.seed))
    }

    pub(crate) fn init_from(class: u8, config: GanConfig, rng: &mut Rng) -> Result<Self, GanError> {
        config.validate()?;
        if usize::from(class) >= NUM_CLASSES {
            return Err(GanError::Config(format!("class {class} outside 0..{NUM_CLASSES}")));
        }
        let generator = Generator::new(&config, rng);
        let discriminator = Discriminator::new(&config, rng);
        Ok(Self {
            class,
            config,
            generator,
            discriminator,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let meta: BTreeMap<String, String> = [
            ("kind", "gan".to_string()),
            ("class", self.class.to_string()),
            ("latent_dim", c.latent_dim.to_string()),
            ("projection", c.projection.to_string()),
            ("hidden", c.hidden.to_string()),
            ("seq_len", c.seq_len.to_string()),
            ("epochs", c.epochs.to_string()),
            ("seed", c.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Checkpoint::from_module(self, meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, GanError> {
        if ckpt.meta_value("kind")? != "gan" {
            return Err(GanError::Config("checkpoint is not a GAN".into()));
        }
        let config = GanConfig {
            latent_dim: ckpt.meta_parse("latent_dim")?,
            projection: ckpt.meta_parse("projection")?,
            hidden: ckpt.meta_parse("hidden")?,
            seq_len: ckpt.meta_parse("seq_len")?,
            epochs: ckpt.meta_parse("epochs")?,
            seed: ckpt.meta_parse("seed")?,
            ..GanConfig::default()
        };
        let mut model = Self::init(ckpt.meta_parse("class")?, config)?;
        ckpt.load_into(&mut model)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GanError> {
        Ok(self.checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GanError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Module for GanModel {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        visit_prefixed("generator", &self.generator, f);
        visit_prefixed("discriminator", &self.discriminator, f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        visit_prefixed_mut("generator", &mut self.generator, f);
        visit_prefixed_mut("discriminator", &mut self.discriminator, f);
    }
}

/// `BCE(D(x), 1) + BCE(D(G(z)), 0)` from scores, with gradients w.r.t.
/// both score tensors.
pub(crate) fn discriminator_loss_from_scores(
    d_real: &Tensor,
    d_fake: &Tensor,
) -> Result<(f64, Tensor, Tensor), NnError> {
    let (l_real, g_real) = bce_loss(d_real, &Tensor::full(d_real.shape(), 1.0))?;
    let (l_fake, g_fake) = bce_loss(d_fake, &Tensor::full(d_fake.shape(), 0.0))?;
    Ok((l_real + l_fake, g_real, g_fake))
}

/// `BCE(D(G(z)), 1)` from scores, with its gradient.
pub(crate) fn generator_loss_from_scores(d_fake: &Tensor) -> Result<(f64, Tensor), NnError> {
    bce_loss(d_fake, &Tensor::full(d_fake.shape(), 1.0))
}

fn non_empty(what: &str, t: &Tensor) -> Result<(), NnError> {
    if t.rank() != 2 || t.shape()[0] == 0 {
        return Err(NnError::Shape(format!(
            "{what} batch must be non-empty [B, T], got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Discriminator loss on a real batch and a generated batch, both `[B, T]`.
pub fn discriminator_loss(model: &GanModel, real: &Tensor, fake: &Tensor) -> Result<f64, NnError> {
    non_empty("real", real)?;
    non_empty("fake", fake)?;
    let d_real = model.discriminator.forward(real)?;
    let d_fake = model.discriminator.forward(fake)?;
    Ok(discriminator_loss_from_scores(&d_real, &d_fake)?.0)
}

/// Generator loss on a generated batch `[B, T]`.
pub fn generator_loss(model: &GanModel, fake: &Tensor) -> Result<f64, NnError> {
    non_empty("fake", fake)?;
    Ok(generator_loss_from_scores(&model.discriminator.forward(fake)?)?.0)
}
