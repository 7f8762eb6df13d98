//! Five-class 1D CNN beat classifier.
//!
//! ```text
//! [B,1,187] conv(16,k5) relu pool2 → [B,16,91]
//!           conv(32,k5) relu pool2 → [B,32,43]
//!           flatten 1376 → dense 64 relu → dense 5 (logits)
//! ```
//!
//! Trained with softmax cross-entropy and Adam on seeded shuffled
//! mini-batches. There is no regularization and no class weighting.

mod model;
mod train;

pub use model::{CnnCache, CnnModel};
pub use train::{predict, train_classifier, ClassifierTrace};

use serde::{Deserialize, Serialize};

use crate::data::{BEAT_LEN, NUM_CLASSES};
use crate::nncore::checkpoint::CheckpointError;
use crate::nncore::NnError;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("invalid classifier config: {0}")]
    Config(String),
    #[error("classifier training: {0}")]
    Training(String),
    #[error("classifier diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            conv1_filters: 16,
            conv2_filters: 32,
            kernel: 5,
            pool: 2,
            hidden: 64,
            batch_size: 64,
            epochs: 10,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Sequence lengths after each stage, plus the flattened width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageWidths {
    pub conv1: usize,
    pub pool1: usize,
    pub conv2: usize,
    pub pool2: usize,
    pub flatten: usize,
}

impl CnnConfig {
    pub fn widths(&self) -> Result<StageWidths, ClassifierError> {
        let conv = |len: usize, what: &str| {
            if self.kernel == 0 || self.kernel > len {
                Err(ClassifierError::Config(format!(
                    "kernel {} does not fit the {len}-sample input of {what}",
                    self.kernel
                )))
            } else {
                Ok(len - self.kernel + 1)
            }
        };
        if self.pool == 0 {
            return Err(ClassifierError::Config("pool window must be at least 1".into()));
        }
        let conv1 = conv(BEAT_LEN, "conv1")?;
        let pool1 = conv1 / self.pool;
        let conv2 = conv(pool1, "conv2")?;
        let pool2 = conv2 / self.pool;
        if pool2 == 0 {
            return Err(ClassifierError::Config("second pooling stage leaves no samples".into()));
        }
        Ok(StageWidths {
            conv1,
            pool1,
            conv2,
            pool2,
            flatten: pool2 * self.conv2_filters,
        })
    }

    pub fn validate(&self) -> Result<StageWidths, ClassifierError> {
        for (name, v) in [
            ("conv1_filters", self.conv1_filters),
            ("conv2_filters", self.conv2_filters),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(ClassifierError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ClassifierError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        self.widths()
    }

    pub fn classes(&self) -> usize {
        NUM_CLASSES
    }
}
