use rand::seq::SliceRandom;

use super::{DataError, Dataset, BEAT_LEN};
use crate::nncore::Tensor;
use crate::rng::seeded;

/// One mini-batch: inputs `[b, 187]`, labels and the dataset indices used.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    size: usize,
    pos: usize,
}

/// Mini-batches over `ds`. With a seed the order is a seeded permutation,
/// otherwise dataset order. The last batch may be short.
pub fn batches(ds: &Dataset, size: usize, shuffle_seed: Option<u64>) -> Result<BatchIter<'_>, DataError> {
    if size == 0 {
        return Err(DataError::Param("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut seeded(seed));
    }
    Ok(BatchIter {
        ds,
        order,
        size,
        pos: 0,
    })
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let mut data = Vec::with_capacity(indices.len() * BEAT_LEN);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in &indices {
            let b = &self.ds.beats()[i];
            data.extend_from_slice(b.samples());
            labels.push(usize::from(b.label()));
        }
        let inputs = Tensor::from_vec(&[indices.len(), BEAT_LEN], data).expect("batch shape");
        Some(Batch {
            inputs,
            labels,
            indices,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.order.len() - self.pos).div_ceil(self.size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}
