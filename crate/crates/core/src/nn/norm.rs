//! Batch normalization over the valid positions of a masked batch.
//!
//! Statistics are computed per channel across every valid position in the
//! batch; padded positions contribute nothing and stay zero in the output.

use crate::tensor::{Mask, Tensor};

use super::{ConvLayerParams, Mode, NnError};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight kept by the running statistics on each update.
pub const BN_MOMENTUM: f64 = 0.99;

/// Batch statistics saved by a train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

fn check_shapes(input: &Tensor, params: &ConvLayerParams, mask: &Mask) -> Result<(), NnError> {
    if input.rank() != 3 {
        return Err(NnError::Shape(format!(
            "batchnorm expects [batch, channels, length] input, got {:?}",
            input.shape()
        )));
    }
    if input.dim(1) != params.gamma.len() {
        return Err(NnError::Shape(format!(
            "input has {} channels but normalization parameters have {}",
            input.dim(1),
            params.gamma.len()
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
    Ok(())
}

/// Normalizes each channel over the valid positions of the batch.
///
/// Train mode computes batch statistics (biased variance) and returns them
/// as a cache for the backward pass; apply them to the running statistics
/// with [`update_running_stats`]. Infer mode applies the stored running
/// statistics and returns no cache. Output at padded positions is zero in
/// both modes.
pub fn batchnorm_forward(
    input: &Tensor,
    params: &ConvLayerParams,
    mask: &Mask,
    mode: Mode,
) -> Result<(Tensor, Option<BatchNormCache>), NnError> {
    check_shapes(input, params, mask)?;
    let (batch, channels, len) = (input.dim(0), input.dim(1), input.dim(2));
    let m = mask.total_valid();
    if m == 0 {
        return Err(NnError::TooFewValid(0));
    }

    let mut out = Tensor::zeros(&[batch, channels, len]);
    match mode {
        Mode::Infer => {
            for b in 0..batch {
                let valid = mask.valid_len(b);
                for c in 0..channels {
                    let gamma = params.gamma.data()[c];
                    let beta = params.beta.data()[c];
                    let mu = params.running_mean.data()[c];
                    let inv = 1.0 / (params.running_var.data()[c] + BN_EPSILON).sqrt();
                    let x = &input.row3(b, c)[..valid];
                    let y = &mut out.row3_mut(b, c)[..valid];
                    for (yi, xi) in y.iter_mut().zip(x) {
                        *yi = gamma * (xi - mu) * inv + beta;
                    }
                }
            }
            Ok((out, None))
        }
        Mode::Train => {
            if m < 2 {
                return Err(NnError::TooFewValid(m));
            }
            let mut mean = vec![0.0; channels];
            let mut var = vec![0.0; channels];
            for c in 0..channels {
                let mut sum = 0.0;
                for b in 0..batch {
                    sum += input.row3(b, c)[..mask.valid_len(b)].iter().sum::<f64>();
                }
                let mu = sum / m as f64;
                let mut sq = 0.0;
                for b in 0..batch {
                    for &x in &input.row3(b, c)[..mask.valid_len(b)] {
                        let d = x - mu;
                        sq += d * d;
                    }
                }
                mean[c] = mu;
                var[c] = sq / m as f64;
            }
            for c in 0..channels {
                let gamma = params.gamma.data()[c];
                let beta = params.beta.data()[c];
                let inv = 1.0 / (var[c] + BN_EPSILON).sqrt();
                let mu = mean[c];
                for b in 0..batch {
                    let valid = mask.valid_len(b);
                    let x = &input.row3(b, c)[..valid];
                    let y = &mut out.row3_mut(b, c)[..valid];
                    for (yi, xi) in y.iter_mut().zip(x) {
                        *yi = gamma * (xi - mu) * inv + beta;
                    }
                }
            }
            Ok((out, Some(BatchNormCache { mean, var })))
        }
    }
}

/// Folds one train-mode batch's statistics into the running statistics:
/// `running = BN_MOMENTUM * running + (1 - BN_MOMENTUM) * batch`.
pub fn update_running_stats(params: &mut ConvLayerParams, cache: &BatchNormCache) {
    let channels = params.gamma.len();
    debug_assert_eq!(cache.mean.len(), channels);
    for c in 0..channels {
        let rm = params.running_mean.data_mut();
        rm[c] = BN_MOMENTUM * rm[c] + (1.0 - BN_MOMENTUM) * cache.mean[c];
        let rv = params.running_var.data_mut();
        rv[c] = BN_MOMENTUM * rv[c] + (1.0 - BN_MOMENTUM) * cache.var[c];
    }
}

/// Backward pass matching [`batchnorm_forward`].
///
/// For train mode pass the cache returned by the forward call; the input
/// gradient then accounts for each position's effect on the batch
/// statistics. With no cache the pass differentiates the infer-mode affine
/// map through the running statistics.
pub fn batchnorm_backward(
    input: &Tensor,
    params: &ConvLayerParams,
    mask: &Mask,
    cache: Option<&BatchNormCache>,
    grad_output: &Tensor,
) -> Result<BatchNormGrads, NnError> {
    if grad_output.shape() != input.shape() {
        return Err(NnError::Shape(format!(
            "grad_output {:?} does not match input {:?}",
            grad_output.shape(),
            input.shape()
        )));
    }
    let (batch, channels, len) = (input.dim(0), input.dim(1), input.dim(2));
    let m = mask.total_valid();
    if m == 0 {
        return Err(NnError::TooFewValid(0));
    }

    let mut d_input = Tensor::zeros(&[batch, channels, len]);
    let mut d_gamma = Tensor::zeros(&[channels]);
    let mut d_beta = Tensor::zeros(&[channels]);

    for c in 0..channels {
        let gamma = params.gamma.data()[c];
        let (mu, inv) = match cache {
            Some(cache) => (cache.mean[c], 1.0 / (cache.var[c] + BN_EPSILON).sqrt()),
            None => (
                params.running_mean.data()[c],
                1.0 / (params.running_var.data()[c] + BN_EPSILON).sqrt(),
            ),
        };
        // Sums over valid positions only; padded grad_output cells are
        // ignored because the forward pinned those outputs to zero.
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for b in 0..batch {
            let valid = mask.valid_len(b);
            let x = &input.row3(b, c)[..valid];
            let g = &grad_output.row3(b, c)[..valid];
            for (gi, xi) in g.iter().zip(x) {
                sum_g += gi;
                sum_gx += gi * (xi - mu) * inv;
            }
        }
        d_gamma.data_mut()[c] = sum_gx;
        d_beta.data_mut()[c] = sum_g;

        match cache {
            Some(_) => {
                let mf = m as f64;
                for b in 0..batch {
                    let valid = mask.valid_len(b);
                    let x = &input.row3(b, c)[..valid];
                    let g = &grad_output.row3(b, c)[..valid];
                    let dx = &mut d_input.row3_mut(b, c)[..valid];
                    for ((di, gi), xi) in dx.iter_mut().zip(g).zip(x) {
                        let xhat = (xi - mu) * inv;
                        *di = gamma * inv * (gi - sum_g / mf - xhat * sum_gx / mf);
                    }
                }
            }
            None => {
                for b in 0..batch {
                    let valid = mask.valid_len(b);
                    let g = &grad_output.row3(b, c)[..valid];
                    let dx = &mut d_input.row3_mut(b, c)[..valid];
                    for (di, gi) in dx.iter_mut().zip(g) {
                        *di = gamma * inv * gi;
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: d_input,
        gamma: d_gamma,
        beta: d_beta,
    })
}
