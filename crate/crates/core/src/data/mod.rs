//! Heartbeat records, CSV ingestion and dataset-level operations.
//!
//! The on-disk format is one beat per line: 187 comma-separated amplitudes
//! followed by the class label (`0`–`4`, integral, usually written `3.0`).
//! An optional 189th column carries the origin tag
//! (`real | synthetic | augmented`).

mod balance;
mod batch;
mod csv;
pub mod surrogate;

use std::fmt;
use std::ops::Index;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use balance::{rebalance, BalancePlan, BalancePolicy, BeatPool, BeatSource, ClassAction, ClassPlan};
pub use batch::{batches, Batch, BatchIter};
pub use csv::{load_csv, read_csv, save_csv, write_csv, write_histogram_csv};

use crate::rng::seeded;

/// Samples per beat.
pub const BEAT_LEN: usize = 187;
/// Number of arrhythmia classes.
pub const NUM_CLASSES: usize = 5;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("invalid beat: {0}")]
    Beat(String),
    #[error("balance policy: {0}")]
    Policy(String),
    #[error("parameter: {0}")]
    Param(String),
    #[error("synthesizer failed for class {class}: {source}")]
    Synthesis {
        class: u8,
        #[source]
        source: BoxError,
    },
}

/// One heartbeat: 187 amplitudes plus its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct Beat {
    samples: Vec<f64>,
    label: u8,
}

impl Beat {
    pub fn new(samples: Vec<f64>, label: u8) -> Result<Self, DataError> {
        if samples.len() != BEAT_LEN {
            return Err(DataError::Beat(format!(
                "expected {BEAT_LEN} samples, got {}",
                samples.len()
            )));
        }
        if usize::from(label) >= NUM_CLASSES {
            return Err(DataError::Beat(format!("label {label} outside 0..{NUM_CLASSES}")));
        }
        Ok(Self { samples, label })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn label(&self) -> u8 {
        self.label
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Synthetic,
    Augmented,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Real => "real",
            Origin::Synthetic => "synthetic",
            Origin::Augmented => "augmented",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "real" => Some(Origin::Real),
            "synthetic" => Some(Origin::Synthetic),
            "augmented" => Some(Origin::Augmented),
            _ => None,
        }
    }
}

/// Ordered beats with a provenance tag per beat.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    beats: Vec<Beat>,
    origins: Vec<Origin>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_beats(beats: Vec<Beat>, origin: Origin) -> Self {
        let origins = vec![origin; beats.len()];
        Self { beats, origins }
    }

    pub fn push(&mut self, beat: Beat, origin: Origin) {
        self.beats.push(beat);
        self.origins.push(origin);
    }

    pub fn extend(&mut self, other: Dataset) {
        self.beats.extend(other.beats);
        self.origins.extend(other.origins);
    }

    pub fn len(&self) -> usize {
        self.beats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beats.is_empty()
    }

    pub fn beats(&self) -> &[Beat] {
        &self.beats
    }

    pub fn origins(&self) -> &[Origin] {
        &self.origins
    }

    pub fn labels(&self) -> Vec<usize> {
        self.beats.iter().map(|b| usize::from(b.label)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Beat, Origin)> {
        self.beats.iter().zip(self.origins.iter().copied())
    }

    /// Beats at `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            beats: indices.iter().map(|&i| self.beats[i].clone()).collect(),
            origins: indices.iter().map(|&i| self.origins[i]).collect(),
        }
    }

    pub fn of_class(&self, class: u8) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.beats[i].label == class).collect();
        self.select(&idx)
    }

    pub fn class_histogram(&self) -> ClassHistogram {
        class_histogram(self)
    }
}

/// Per-class beat counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram(pub [usize; NUM_CLASSES]);

impl ClassHistogram {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn counts(&self) -> [usize; NUM_CLASSES] {
        self.0
    }
}

impl Index<usize> for ClassHistogram {
    type Output = usize;

    fn index(&self, class: usize) -> &usize {
        &self.0[class]
    }
}

impl fmt::Display for ClassHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (class, count) in self.0.iter().enumerate() {
            if class > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{class}:{count}")?;
        }
        Ok(())
    }
}

pub fn class_histogram(ds: &Dataset) -> ClassHistogram {
    let mut counts = [0; NUM_CLASSES];
    for b in &ds.beats {
        counts[usize::from(b.label)] += 1;
    }
    ClassHistogram(counts)
}

/// Keeps exactly `target` beats of `class`, chosen as the prefix of a
/// seeded uniform permutation. Other classes and the relative order of
/// survivors are untouched.
pub fn downsample_class(ds: &Dataset, class: u8, target: usize, seed: u64) -> Result<Dataset, DataError> {
    let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.beats[i].label == class).collect();
    if target > members.len() {
        return Err(DataError::Policy(format!(
            "cannot down-sample class {class} to {target}: only {} beats",
            members.len()
        )));
    }
    members.shuffle(&mut seeded(seed));
    let mut keep = vec![true; ds.len()];
    for &i in &members[target..] {
        keep[i] = false;
    }
    let idx: Vec<usize> = (0..ds.len()).filter(|&i| keep[i]).collect();
    Ok(ds.select(&idx))
}

/// Down-samples every class above `cap` to exactly `cap` beats, class `c`
/// using seed `seed + c`.
pub fn cap_classes(ds: &Dataset, cap: usize, seed: u64) -> Dataset {
    let hist = ds.class_histogram();
    let mut out = ds.clone();
    for class in 0..NUM_CLASSES {
        if hist[class] > cap {
            out = downsample_class(&out, class as u8, cap, seed.wrapping_add(class as u64))
                .expect("cap below class size");
        }
    }
    out
}

/// Keeps `round(fraction · n_c)` beats of each class `c`, preserving the
/// class proportions up to rounding.
pub fn stratified_subsample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::Param(format!(
            "subsample fraction {fraction} outside (0, 1]"
        )));
    }
    let hist = ds.class_histogram();
    let mut out = ds.clone();
    for class in 0..NUM_CLASSES {
        let keep = (hist[class] as f64 * fraction).round() as usize;
        out = downsample_class(&out, class as u8, keep, seed.wrapping_add(class as u64))?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Augmentation {
    /// Circular rotation to the right by the offset, in `[0, 187)`.
    TimeShift(usize),
    /// Zero-mean Gaussian noise with this standard deviation, then clamp
    /// to `[0, 1]`.
    AddNoise(f64),
}

/// Classical augmentation baseline. The result should be tagged
/// [`Origin::Augmented`] when added to a dataset.
pub fn classic_augment(beat: &Beat, method: Augmentation, seed: u64) -> Result<Beat, DataError> {
    let mut samples = beat.samples.clone();
    match method {
        Augmentation::TimeShift(offset) => {
            if offset >= BEAT_LEN {
                return Err(DataError::Param(format!(
                    "time-shift offset {offset} outside [0, {BEAT_LEN})"
                )));
            }
            samples.rotate_right(offset);
        }
        Augmentation::AddNoise(sigma) => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(DataError::Param(format!("noise sigma {sigma} must be finite and >= 0")));
            }
            if sigma > 0.0 {
                let mut rng = seeded(seed);
                for v in &mut samples {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *v = (*v + sigma * n).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(Beat {
        samples,
        label: beat.label,
    })
}
