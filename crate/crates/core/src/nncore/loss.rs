use super::activation::softmax_rows;
use super::{NnError, Tensor};

/// Probabilities are clamped into `[BCE_EPS, 1 - BCE_EPS]` before logs.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy `−[t·ln p + (1−t)·ln(1−p)]` and its gradient
/// with respect to `p`.
pub fn bce_loss(p: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NnError> {
    if p.shape() != target.shape() {
        return Err(NnError::Shape(format!(
            "bce: probabilities {:?} vs targets {:?}",
            p.shape(),
            target.shape()
        )));
    }
    let n = p.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(p.shape());
    for ((g, &pi), &ti) in grad.data_mut().iter_mut().zip(p.data()).zip(target.data()) {
        let q = pi.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= ti * q.ln() + (1.0 - ti) * (1.0 - q).ln();
        *g = (-ti / q + (1.0 - ti) / (1.0 - q)) / n;
    }
    Ok((loss / n, grad))
}

/// Mean softmax cross-entropy over a `[batch, K]` logit tensor.
/// Gradient is `(softmax − onehot) / batch`.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    logits.expect_rank("cross_entropy logits", 2)?;
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != batch {
        return Err(NnError::Shape(format!(
            "cross_entropy: {} labels for logits {:?}",
            labels.len(),
            logits.shape()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::Label { label, classes });
    }
    let mut grad = softmax_rows(logits)?;
    let n = batch.max(1) as f64;
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        let row = &logits.data()[b * classes..(b + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += log_sum - row[label];
        let g = &mut grad.data_mut()[b * classes..(b + 1) * classes];
        g[label] -= 1.0;
        for v in g.iter_mut() {
            *v /= n;
        }
    }
    Ok((loss / n, grad))
}
