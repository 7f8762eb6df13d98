//! Fixtures shared by the kernel benchmarks.

use beatgan::data::BEAT_LEN;
use beatgan::nncore::Tensor;

/// `[batch, width]` of smooth values in (0, 1) that differ per row.
pub fn wave_batch(batch: usize, width: usize) -> Tensor {
    let data = (0..batch * width)
        .map(|i| {
            let (r, c) = ((i / width) as f64, (i % width) as f64);
            0.5 + 0.45 * (0.07 * c + 0.3 * r).sin()
        })
        .collect();
    Tensor::from_vec(&[batch, width], data).expect("fixture shape")
}

/// `[batch, 187]` beats.
pub fn beat_batch(batch: usize) -> Tensor {
    wave_batch(batch, BEAT_LEN)
}
