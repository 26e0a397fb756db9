//! K-max pooling: keep the K largest values of each channel, in the order
//! they appear along the sequence, so every variable-length input maps to a
//! fixed-size output.

use crate::tensor::{Mask, Tensor};

use super::NnError;

const UNUSED: usize = usize::MAX;

/// Source index of every pooled output slot, for gradient routing.
#[derive(Debug, Clone)]
pub struct KmaxCache {
    k: usize,
    input_len: usize,
    /// Flattened `[batch, channels, k]`; `usize::MAX` marks a zero-filled
    /// slot that came from no input position.
    indices: Vec<usize>,
}

/// Selects the `k` largest valid values of each `(batch, channel)` row,
/// preserving their left-to-right order. Ties keep the earliest position.
/// Rows with fewer than `k` valid positions keep everything they have and
/// zero-fill the remaining slots on the right.
///
/// Input is `[batch, channels, length]`, output `[batch, channels, k]`.
pub fn kmax_pool(
    input: &Tensor,
    mask: &Mask,
    k: usize,
) -> Result<(Tensor, KmaxCache), NnError> {
    if k == 0 {
        return Err(NnError::ZeroK);
    }
    if input.rank() != 3 {
        return Err(NnError::Shape(format!(
            "kmax_pool expects [batch, channels, length] input, got {:?}",
            input.shape()
        )));
    }
    if mask.batch() != input.dim(0) || mask.max_len() != input.dim(2) {
        return Err(NnError::Shape(format!(
            "mask [{}, {}] does not cover input {:?}",
            mask.batch(),
            mask.max_len(),
            input.shape()
        )));
    }
    let (batch, channels, len) = (input.dim(0), input.dim(1), input.dim(2));
    let mut out = Tensor::zeros(&[batch, channels, k]);
    let mut indices = vec![UNUSED; batch * channels * k];
    let mut order: Vec<usize> = Vec::with_capacity(len);

    for b in 0..batch {
        let valid = mask.valid_len(b);
        for c in 0..channels {
            let row = &input.row3(b, c)[..valid];
            order.clear();
            order.extend(0..valid);
            // Stable descending sort by value: equal values keep ascending
            // index order, so the earliest duplicates win the last slots.
            order.sort_by(|&i, &j| row[j].partial_cmp(&row[i]).unwrap());
            let taken = k.min(valid);
            order.truncate(taken);
            order.sort_unstable();
            let out_row = out.row3_mut(b, c);
            let idx_base = (b * channels + c) * k;
            for (slot, &i) in order.iter().enumerate() {
                out_row[slot] = row[i];
                indices[idx_base + slot] = i;
            }
        }
    }
    Ok((
        out,
        KmaxCache {
            k,
            input_len: len,
            indices,
        },
    ))
}

/// Routes each pooled slot's gradient back to the position it was read from.
pub fn kmax_pool_backward(
    cache: &KmaxCache,
    grad_output: &Tensor,
) -> Result<Tensor, NnError> {
    if grad_output.rank() != 3 || grad_output.dim(2) != cache.k {
        return Err(NnError::Shape(format!(
            "grad_output {:?} does not match pooled shape [.., .., {}]",
            grad_output.shape(),
            cache.k
        )));
    }
    let (batch, channels) = (grad_output.dim(0), grad_output.dim(1));
    if batch * channels * cache.k != cache.indices.len() {
        return Err(NnError::Shape(format!(
            "grad_output {:?} does not match cached pooling of {} slots",
            grad_output.shape(),
            cache.indices.len()
        )));
    }
    let mut d_input = Tensor::zeros(&[batch, channels, cache.input_len]);
    for b in 0..batch {
        for c in 0..channels {
            let g = grad_output.row3(b, c);
            let dx = d_input.row3_mut(b, c);
            let idx_base = (b * channels + c) * cache.k;
            for (slot, &i) in cache.indices[idx_base..idx_base + cache.k].iter().enumerate() {
                if i != UNUSED {
                    dx[i] += g[slot];
                }
            }
        }
    }
    Ok(d_input)
}
