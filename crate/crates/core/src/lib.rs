//! Fold classification for variable-length protein sequences.
//!
//! The crate provides the full pipeline: per-residue feature encoding,
//! a two-tower 1-D convolutional network with hand-written backpropagation,
//! length-binned mini-batch training, fold-feature extraction, feature-space
//! distance metrics with clustering and template ranking, and a sequence
//! perturbation harness.

pub mod analyze;
pub mod batch;
pub mod encode;
pub mod model;
pub mod nn;
pub mod perturb;
pub mod tensor;
pub mod train;

pub use batch::{make_bins, pad_batch, pad_batch_to, LengthBin, PaddedBatch};
pub use encode::{EncodedProtein, ProfileMatrix};
pub use model::{
    build_model, infer, infer_corpus, load_checkpoint, predict_topk, save_checkpoint,
    FoldPrediction, ModelConfig, ModelError, ModelState, SFFeature,
};
pub use perturb::{
    divergence_experiment, generate_controls, generate_variants, rank_sum_test, truncation_scan,
    DivergenceReport, PerturbError, PerturbationSet, ProfileRows, RankSumTest, TruncationReport,
    Variant, VariantKind,
};
pub use tensor::{Mask, Tensor};
