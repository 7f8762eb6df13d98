//! Per-class LSTM-GAN.
//!
//! The generator projects a latent vector `z ~ N(0, I)` to a per-step input,
//! feeds that same input to an LSTM at each of the 187 steps, and maps
//! every hidden state through a shared dense + sigmoid head to one sample.
//! The discriminator runs an LSTM over the beat and scores its last hidden
//! state with a dense + sigmoid head.
//!
//! Training alternates one discriminator step on
//! `L_D = BCE(D(x), 1) + BCE(D(G(z)), 0)` with one generator step on
//! `L_G = BCE(D(G(z)), 1)`, each with fresh latents.

mod model;
mod train;

pub use model::{discriminator_loss, generator_loss, Discriminator, GanModel, Generator};
pub use train::{sample_latent, synthesize, train_gan, EpochStats, GanTrainer, TrainingTrace};

use serde::{Deserialize, Serialize};

use crate::data::BEAT_LEN;
use crate::nncore::checkpoint::CheckpointError;
use crate::nncore::NnError;

#[derive(Debug, thiserror::Error)]
pub enum GanError {
    #[error("invalid GAN config: {0}")]
    Config(String),
    #[error("GAN training: {0}")]
    Training(String),
    #[error("GAN diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub latent_dim: usize,
    /// Width of the projected latent fed to the generator LSTM each step.
    pub projection: usize,
    pub hidden: usize,
    pub seq_len: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub beta1: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 50,
            projection: 32,
            hidden: 64,
            seq_len: BEAT_LEN,
            lr_generator: 2e-4,
            lr_discriminator: 2e-4,
            beta1: 0.5,
            batch_size: 64,
            epochs: 200,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |msg: String| Err(GanError::Config(msg));
        if self.seq_len != BEAT_LEN {
            return bad(format!("sequence length must be {BEAT_LEN}, got {}", self.seq_len));
        }
        for (name, v) in [
            ("latent_dim", self.latent_dim),
            ("projection", self.projection),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad(format!("beta1 must be in [0, 1), got {}", self.beta1));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        GanConfig::default().validate().unwrap();
        let cases = [
            GanConfig {
                seq_len: 100,
                ..Default::default()
            },
            GanConfig {
                latent_dim: 0,
                ..Default::default()
            },
            GanConfig {
                hidden: 0,
                ..Default::default()
            },
            GanConfig {
                lr_generator: -1.0,
                ..Default::default()
            },
            GanConfig {
                beta1: 1.0,
                ..Default::default()
            },
        ];
        for cfg in cases {
            assert!(matches!(cfg.validate(), Err(GanError::Config(_))), "{cfg:?}");
        }
    }
}
