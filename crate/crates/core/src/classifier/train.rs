use std::collections::BTreeSet;
use std::thread;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, CnnConfig, CnnModel};
use crate::data::{batches, Beat, Dataset, BEAT_LEN};
use crate::nncore::{cross_entropy_loss, AdamConfig, AdamState, Module, Tensor};
use crate::rng::seeded;

/// Rows per forward pass during prediction.
const PREDICT_CHUNK: usize = 512;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrace {
    /// Per-sample mean training loss of each epoch, in order.
    pub epoch_losses: Vec<f64>,
    /// Loss of the very first mini-batch, before any update.
    pub first_batch_loss: f64,
}

impl ClassifierTrace {
    pub fn len(&self) -> usize {
        self.epoch_losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epoch_losses.is_empty()
    }

    /// `epoch,mean_loss` with epochs numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("{},{l}\n", i + 1));
        }
        s
    }
}

/// Trains a fresh model from `cfg.seed` for `cfg.epochs` epochs, reporting
/// `(epoch, mean loss)` after each one.
pub fn train_classifier(
    train: &Dataset,
    cfg: CnnConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<(CnnModel, ClassifierTrace), ClassifierError> {
    let classes: BTreeSet<u8> = train.beats().iter().map(Beat::label).collect();
    if classes.len() < 2 {
        return Err(ClassifierError::Training(format!(
            "training set needs at least 2 classes, got {} beats of {} class(es)",
            train.len(),
            classes.len()
        )));
    }
    let mut model = CnnModel::init(cfg)?;
    let mut rng = seeded(cfg.seed ^ 0x005e_ed0f_ba7c);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::classifier()
        },
        &model,
    );
    let mut trace = ClassifierTrace {
        first_batch_loss: f64::NAN,
        ..Default::default()
    };
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        for batch in batches(train, cfg.batch_size, Some(rng.next_u64())).expect("batch size validated") {
            let (logits, cache) = model.forward_cached(&batch.inputs)?;
            let (loss, grad) = cross_entropy_loss(&logits, &batch.labels)?;
            if !loss.is_finite() {
                return Err(ClassifierError::Diverged { epoch });
            }
            if trace.first_batch_loss.is_nan() {
                trace.first_batch_loss = loss;
            }
            model.backward(&cache, &grad)?;
            adam.step(&mut model);
            model.zero_grad();
            total += loss * batch.labels.len() as f64;
        }
        let mean = total / train.len() as f64;
        if !mean.is_finite() || !model.flat_params().iter().all(|v| v.is_finite()) {
            return Err(ClassifierError::Diverged { epoch });
        }
        progress(epoch, mean);
        trace.epoch_losses.push(mean);
    }
    Ok((model, trace))
}

/// Argmax class per beat, ties going to the lower class id. Work is split
/// across the available cores; the result does not depend on the split.
pub fn predict(model: &CnnModel, ds: &Dataset) -> Result<Vec<u8>, ClassifierError> {
    let beats = ds.beats();
    if beats.is_empty() {
        return Ok(Vec::new());
    }
    let workers = thread::available_parallelism().map_or(1, |n| n.get());
    let per_worker = beats.len().div_ceil(workers).max(1);
    thread::scope(|s| {
        let handles: Vec<_> = beats
            .chunks(per_worker)
            .map(|part| s.spawn(move || predict_slice(model, part)))
            .collect();
        let mut out = Vec::with_capacity(beats.len());
        for h in handles {
            out.extend(h.join().expect("prediction worker panicked")?);
        }
        Ok(out)
    })
}

fn predict_slice(model: &CnnModel, beats: &[Beat]) -> Result<Vec<u8>, ClassifierError> {
    let mut out = Vec::with_capacity(beats.len());
    for chunk in beats.chunks(PREDICT_CHUNK) {
        let data: Vec<f64> = chunk.iter().flat_map(|b| b.samples().iter().copied()).collect();
        let logits = model.forward(&Tensor::from_vec(&[chunk.len(), BEAT_LEN], data)?)?;
        for r in 0..chunk.len() {
            out.push(argmax(logits.row(r)) as u8);
        }
    }
    Ok(out)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
