//! Seeded random number generation.
//!
//! Every stochastic step in the crate draws from [`Rng`], which is
//! xoshiro256** (Blackman & Vigna). A 64-bit seed is expanded into the
//! 256-bit state with SplitMix64, so any implementation of those two
//! published algorithms reproduces the same stream. Gaussian draws use
//! `rand_distr::StandardNormal` (ziggurat).
//!
//! Pipeline stages derive their seeds from one global seed by adding the
//! fixed offsets below, so stages never share a stream.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type Rng = Xoshiro256StarStar;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Offset for majority-class down-sampling and balance bookkeeping.
pub const BALANCE_OFFSET: u64 = 100;
/// Offset for per-class GAN training; the class id is added on top.
pub const GAN_OFFSET: u64 = 1_000;
/// Offset for synthetic beat sampling; the class id is added on top.
pub const SYNTH_OFFSET: u64 = 2_000;
/// Offset for classifier initialization and batch shuffling.
pub const CNN_OFFSET: u64 = 3_000;
/// Offset for subsampling the unbalanced comparison set.
pub const SUBSAMPLE_OFFSET: u64 = 4_000;
/// Offset for picking beats in waveform exports.
pub const WAVEFORM_OFFSET: u64 = 5_000;
/// Offset for capping per-class GAN training sets.
pub const CAP_OFFSET: u64 = 6_000;

pub fn stage_seed(global: u64, offset: u64) -> u64 {
    global.wrapping_add(offset)
}
