use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{discriminator_loss_from_scores, generator_loss_from_scores};
use super::{GanConfig, GanError, GanModel};
use crate::data::{batches, Beat, Dataset, BEAT_LEN};
use crate::nncore::{AdamConfig, AdamState, Module, Tensor};
use crate::rng::{seeded, Rng};

/// Keeps synthesized samples strictly inside `(0, 1)` where the sigmoid
/// rounds to an endpoint.
const OPEN_INTERVAL_MARGIN: f64 = 1e-12;

/// `n` rows of i.i.d. standard normal latents.
pub fn sample_latent(cfg: &GanConfig, n: usize, seed: u64) -> Tensor {
    latent_from(&mut seeded(seed), n, cfg.latent_dim)
}

fn latent_from(rng: &mut Rng, n: usize, dim: usize) -> Tensor {
    let data = (0..n * dim).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_vec(&[n, dim], data).expect("latent shape")
}

/// Means over one epoch's steps, or a single step's values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    /// Mean `D(x)` on real beats.
    pub d_real: f64,
    /// Mean `D(G(z))` on generated beats.
    pub d_fake: f64,
}

impl EpochStats {
    fn is_finite(&self) -> bool {
        [self.loss_d, self.loss_g, self.d_real, self.d_fake]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochStats>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    /// `epoch,loss_d,loss_g,d_real,d_fake` with epochs numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss_d,loss_g,d_real,d_fake\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.loss_d, e.loss_g, e.d_real, e.d_fake
            ));
        }
        s
    }
}

/// A model plus the optimizer state and random stream that drive training.
pub struct GanTrainer {
    pub model: GanModel,
    adam_g: AdamState,
    adam_d: AdamState,
    rng: Rng,
}

impl GanTrainer {
    pub fn new(model: GanModel, rng: Rng) -> Self {
        let cfg = &model.config;
        let adam = |lr| AdamConfig {
            lr,
            beta1: cfg.beta1,
            ..AdamConfig::adversarial()
        };
        let adam_g = AdamState::new(adam(cfg.lr_generator), &model.generator);
        let adam_d = AdamState::new(adam(cfg.lr_discriminator), &model.discriminator);
        Self {
            model,
            adam_g,
            adam_d,
            rng,
        }
    }

    /// One discriminator update on fresh fakes, then one generator update
    /// on fresh fakes with the discriminator frozen. Losses are measured
    /// before the update they drive.
    pub fn train_step(&mut self, real: &Tensor) -> Result<EpochStats, GanError> {
        let (loss_d, d_real, d_fake) = self.discriminator_step(real)?;
        let loss_g = self.generator_step(real.shape()[0])?;
        Ok(EpochStats {
            epoch: 0,
            loss_d,
            loss_g,
            d_real,
            d_fake,
        })
    }

    /// Updates only the discriminator on `real` plus as many fresh fakes.
    /// Returns `(L_D, mean D(x), mean D(G(z)))`.
    pub fn discriminator_step(&mut self, real: &Tensor) -> Result<(f64, f64, f64), GanError> {
        real.expect_rank("real batch", 2)?;
        let (batch, steps) = (real.shape()[0], real.shape()[1]);
        if batch == 0 {
            return Err(GanError::Training("empty real batch".into()));
        }
        let z = latent_from(&mut self.rng, batch, self.model.config.latent_dim);
        let fake = self.model.generator.forward(&z)?;
        let mut both = real.data().to_vec();
        both.extend_from_slice(fake.data());
        let both = Tensor::from_vec(&[2 * batch, steps], both)?;

        let d = &mut self.model.discriminator;
        d.zero_grad();
        let (scores, cache) = d.forward_cached(&both)?;
        let d_real = Tensor::from_vec(&[batch, 1], scores.data()[..batch].to_vec())?;
        let d_fake = Tensor::from_vec(&[batch, 1], scores.data()[batch..].to_vec())?;
        let (loss_d, g_real, g_fake) = discriminator_loss_from_scores(&d_real, &d_fake)?;
        let mut grad = g_real.into_vec();
        grad.extend_from_slice(g_fake.data());
        d.backward(&cache, &Tensor::from_vec(&[2 * batch, 1], grad)?)?;
        self.adam_d.step(d);
        d.zero_grad();
        Ok((loss_d, d_real.mean(), d_fake.mean()))
    }

    /// Updates only the generator through the frozen discriminator on
    /// `batch` fresh latents. Returns `L_G`.
    pub fn generator_step(&mut self, batch: usize) -> Result<f64, GanError> {
        let z = latent_from(&mut self.rng, batch, self.model.config.latent_dim);
        let GanModel {
            generator: g,
            discriminator: d,
            ..
        } = &mut self.model;
        g.zero_grad();
        let (fake, g_cache) = g.forward_cached(&z)?;
        let (scores, d_cache) = d.forward_cached(&fake)?;
        let (loss_g, g_scores) = generator_loss_from_scores(&scores)?;
        let d_input = d.input_gradient(&d_cache, &g_scores)?;
        g.backward(&g_cache, &d_input)?;
        self.adam_g.step(g);
        g.zero_grad();
        Ok(loss_g)
    }

    /// One pass over `real` in seeded shuffled batches.
    pub fn train_epoch(&mut self, real: &Dataset, epoch: usize) -> Result<EpochStats, GanError> {
        let order_seed = self.rng.next_u64();
        let mut acc = EpochStats {
            epoch,
            loss_d: 0.0,
            loss_g: 0.0,
            d_real: 0.0,
            d_fake: 0.0,
        };
        let mut steps = 0.0;
        for batch in batches(real, self.model.config.batch_size, Some(order_seed)).expect("batch size validated") {
            let s = self.train_step(&batch.inputs)?;
            acc.loss_d += s.loss_d;
            acc.loss_g += s.loss_g;
            acc.d_real += s.d_real;
            acc.d_fake += s.d_fake;
            steps += 1.0;
        }
        acc.loss_d /= steps;
        acc.loss_g /= steps;
        acc.d_real /= steps;
        acc.d_fake /= steps;
        if !acc.is_finite() {
            return Err(GanError::Diverged { epoch });
        }
        Ok(acc)
    }
}

/// Trains one GAN for `cfg.epochs` on the real beats of `class`, reporting
/// each finished epoch to `progress`.
pub fn train_gan(
    real: &[Beat],
    class: u8,
    cfg: GanConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<(GanModel, TrainingTrace), GanError> {
    if real.len() < 2 {
        return Err(GanError::Training(format!(
            "class {class} needs at least 2 real beats, got {}",
            real.len()
        )));
    }
    if let Some(b) = real.iter().find(|b| b.label() != class) {
        return Err(GanError::Training(format!(
            "training set for class {class} contains a beat labelled {}",
            b.label()
        )));
    }
    let ds = Dataset::from_beats(real.to_vec(), crate::data::Origin::Real);
    let mut rng = seeded(cfg.seed);
    let model = GanModel::init_from(class, cfg, &mut rng)?;
    let mut trainer = GanTrainer::new(model, rng);
    let mut trace = TrainingTrace::default();
    for epoch in 1..=cfg.epochs {
        let stats = trainer.train_epoch(&ds, epoch)?;
        progress(&stats);
        trace.epochs.push(stats);
    }
    Ok((trainer.model, trace))
}

/// `n` synthetic beats labelled with the model's class.
pub fn synthesize(model: &GanModel, n: usize, seed: u64) -> Result<Vec<Beat>, GanError> {
    const CHUNK: usize = 256;
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let rows = CHUNK.min(n - out.len());
        let beats = model
            .generator
            .forward(&latent_from(&mut rng, rows, model.config.latent_dim))?;
        for r in 0..rows {
            let samples: Vec<f64> = beats
                .row(r)
                .iter()
                .map(|v| v.clamp(OPEN_INTERVAL_MARGIN, 1.0 - OPEN_INTERVAL_MARGIN))
                .collect();
            debug_assert_eq!(samples.len(), BEAT_LEN);
            out.push(Beat::new(samples, model.class).map_err(|e| GanError::Training(e.to_string()))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::surrogate;

    fn tiny(epochs: usize) -> GanConfig {
        GanConfig {
            latent_dim: 4,
            projection: 4,
            hidden: 6,
            batch_size: 8,
            epochs,
            seed: 21,
            ..GanConfig::default()
        }
    }

    fn class_beats(class: u8, n: usize) -> Vec<Beat> {
        let mut counts = [0; 5];
        counts[usize::from(class)] = n;
        surrogate::generate(counts, 5).beats().to_vec()
    }

    #[test]
    fn latent_moments() {
        let cfg = GanConfig::default();
        let z = sample_latent(&cfg, 10_000, 3);
        let mean = z.mean();
        let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        assert_eq!(sample_latent(&cfg, 2, 3).row(0), z.row(0));
    }

    #[test]
    fn updates_are_isolated() {
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        let model = GanModel::init(3, tiny(1)).unwrap();
        let real = Tensor::full(&[4, 187], 0.3);
        let mut t = GanTrainer::new(model, seeded(1));

        let g_before = bits(t.model.generator.flat_params());
        let d_before = bits(t.model.discriminator.flat_params());
        t.discriminator_step(&real).unwrap();
        assert_eq!(bits(t.model.generator.flat_params()), g_before);
        assert_ne!(bits(t.model.discriminator.flat_params()), d_before);

        let g_before = bits(t.model.generator.flat_params());
        let d_before = bits(t.model.discriminator.flat_params());
        t.generator_step(4).unwrap();
        assert_eq!(bits(t.model.discriminator.flat_params()), d_before);
        assert_ne!(bits(t.model.generator.flat_params()), g_before);
        assert!(t.model.flat_grads().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trace_length_and_determinism() {
        let beats = class_beats(1, 12);
        let mut seen = 0;
        let (a, trace) = train_gan(&beats, 1, tiny(3), &mut |_| seen += 1).unwrap();
        assert_eq!(trace.len(), 3);
        assert_eq!(seen, 3);
        assert!(trace.epochs.iter().all(|e| e.loss_d >= 0.0 && e.loss_g >= 0.0));
        assert_eq!(trace.epochs[0].epoch, 1);
        let (b, again) = train_gan(&beats, 1, tiny(3), &mut |_| {}).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(trace, again);
        assert!(trace.to_csv().starts_with("epoch,loss_d,loss_g,d_real,d_fake\n1,"));
    }

    #[test]
    fn training_preconditions() {
        let beats = class_beats(2, 3);
        assert!(matches!(
            train_gan(&beats[..1], 2, tiny(1), &mut |_| {}),
            Err(GanError::Training(_))
        ));
        assert!(matches!(
            train_gan(&beats, 3, tiny(1), &mut |_| {}),
            Err(GanError::Training(_))
        ));
        assert!(matches!(
            train_gan(
                &beats,
                2,
                GanConfig {
                    batch_size: 0,
                    ..tiny(1)
                },
                &mut |_| {}
            ),
            Err(GanError::Config(_))
        ));
    }

    #[test]
    fn synthesis_contract() {
        let model = GanModel::init(4, tiny(1)).unwrap();
        let a = synthesize(&model, 300, 1).unwrap();
        assert_eq!(a.len(), 300);
        assert!(a
            .iter()
            .all(|b| b.label() == 4 && b.samples().iter().all(|&v| v > 0.0 && v < 1.0)));
        let b = synthesize(&model, 300, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, synthesize(&model, 300, 1).unwrap());
        assert!(synthesize(&model, 0, 1).unwrap().is_empty());
    }
}
