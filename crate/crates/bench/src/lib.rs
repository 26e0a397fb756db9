//! Shared fixtures for the criterion benches: deterministic random tensors,
//! parameter blocks, and padded batches shaped like real training input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use foldnet_core::encode::{generate_synthetic, SyntheticSpec};
use foldnet_core::model::{build_model, ModelConfig, ModelState};
use foldnet_core::nn::ConvLayerParams;
use foldnet_core::{pad_batch_to, Mask, PaddedBatch, Tensor};

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    Tensor::from_vec(shape, random_vec(shape.iter().product(), seed))
}

/// Conv parameters with random kernel and bias and identity normalization.
pub fn random_conv_params(
    out_channels: usize,
    in_channels: usize,
    window: usize,
    seed: u64,
) -> ConvLayerParams {
    let mut params = ConvLayerParams::zeros(out_channels, in_channels, window);
    params
        .kernel
        .data_mut()
        .copy_from_slice(&random_vec(out_channels * in_channels * window, seed));
    params
        .bias
        .data_mut()
        .copy_from_slice(&random_vec(out_channels, seed ^ 1));
    params
}

pub fn full_mask(batch: usize, len: usize) -> Mask {
    Mask::from_lengths(&vec![len; batch], len)
}

/// A batch of encoded synthetic proteins, all exactly `len` residues and
/// padded to `len`.
pub fn synthetic_batch(batch: usize, len: usize) -> PaddedBatch {
    let spec = SyntheticSpec {
        num_folds: 4,
        proteins_per_fold: batch.div_ceil(4),
        min_length: len,
        max_length: len,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic(&spec).expect("synthetic fixture corpus");
    let members: Vec<_> = corpus.iter().take(batch).collect();
    pad_batch_to(&members, len)
}

/// A freshly initialized model at the default fold-classification size.
pub fn default_state() -> ModelState {
    build_model(ModelConfig::default(), 7).expect("default model")
}
