//! Differentiable layer kernels over plain tensors.
//!
//! Each layer provides a forward pass and a hand-written backward pass.
//! Layers that consume a [`Mask`](crate::tensor::Mask) force their output to
//! zero at padded positions and keep padded positions out of any statistics,
//! so a batch member's result does not depend on how much padding its batch
//! happens to carry. All backward passes are checked against central finite
//! differences (see [`gradcheck`]).

mod activation;
mod conv;
mod dense;
mod dropout;
mod norm;
mod pool;
mod softmax;

pub mod gradcheck;

pub use activation::{relu, relu_backward};
pub use conv::{conv1d_backward, conv1d_forward, Conv1dGrads, ConvLayerParams};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use dropout::{dropout, dropout_backward, DropoutPlan};
pub use norm::{
    batchnorm_backward, batchnorm_forward, update_running_stats, BatchNormCache, BatchNormGrads,
    BN_EPSILON, BN_MOMENTUM,
};
pub use pool::{kmax_pool, kmax_pool_backward, KmaxCache};
pub use softmax::{softmax_cross_entropy, softmax_cross_entropy_backward, softmax_rows};

use thiserror::Error;

/// Whether a pass updates/uses batch statistics and applies dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {input} channels but kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("k-max pooling requires K >= 1")]
    ZeroK,
    #[error("batch normalization over {0} valid positions (need at least 2 in train mode)")]
    TooFewValid(usize),
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidDropoutRate(f64),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}
