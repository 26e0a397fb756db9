use crate::tensor::Tensor;

use super::NnError;

/// Row-wise softmax with max-subtraction, so arbitrarily large logits stay
/// finite.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor, NnError> {
    if logits.rank() != 2 {
        return Err(NnError::Shape(format!(
            "softmax expects [batch, classes] logits, got {:?}",
            logits.shape()
        )));
    }
    let (batch, _classes) = (logits.dim(0), logits.dim(1));
    let mut probs = logits.clone();
    for b in 0..batch {
        let row = probs.row2_mut(b);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        let inv = 1.0 / sum;
        for x in row.iter_mut() {
            *x *= inv;
        }
    }
    Ok(probs)
}

/// Softmax over each row of `logits` fused with mean cross-entropy against
/// integer labels. Returns the probabilities and the mean loss in nats.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
) -> Result<(Tensor, f64), NnError> {
    let probs = softmax_rows(logits)?;
    let (batch, classes) = (probs.dim(0), probs.dim(1));
    if labels.len() != batch {
        return Err(NnError::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::LabelOutOfRange { label, classes });
    }
    let mut loss = 0.0;
    for b in 0..batch {
        loss -= probs.row2(b)[labels[b]].max(f64::MIN_POSITIVE).ln();
    }
    Ok((probs, loss / batch as f64))
}

/// Gradient of the mean cross-entropy with respect to the logits:
/// `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy_backward(probs: &Tensor, labels: &[usize]) -> Tensor {
    let (batch, _classes) = (probs.dim(0), probs.dim(1));
    assert_eq!(labels.len(), batch, "label count does not match batch");
    let mut grad = probs.clone();
    let scale = 1.0 / batch as f64;
    for b in 0..batch {
        let row = grad.row2_mut(b);
        row[labels[b]] -= 1.0;
        for g in row.iter_mut() {
            *g *= scale;
        }
    }
    grad
}
