//! Rebalancing a fixed-length heartbeat dataset with per-class LSTM-GANs,
//! plus a 1D-CNN classifier and multiclass metrics to measure the effect.
//!
//! Module map:
//! - [`data`]: beat CSV ingestion, class histograms, down-sampling,
//!   rebalancing, classical augmentation baselines, seeded batching.
//! - [`nncore`]: dense tensors and hand-derived layer kernels (dense,
//!   LSTM, conv1d, max-pool), losses, Adam, gradient checking, checkpoints.
//! - [`gan`]: the per-class generator/discriminator pair and its
//!   adversarial training loop.
//! - [`classifier`]: the five-class 1D CNN.
//! - [`metrics`]: confusion matrix, per-class MCC/precision/recall/F1 and
//!   report rendering.

pub mod classifier;
pub mod data;
pub mod gan;
pub mod metrics;
pub mod nncore;
pub mod rng;
