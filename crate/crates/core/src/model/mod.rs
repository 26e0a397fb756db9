//! The fold-classification network.
//!
//! Architecture: for each configured window size, an independent tower of
//! `conv_depth` stacked (convolution → batch normalization → ReLU) blocks
//! over the `[B, 45, L]` input, followed by order-preserving K-max pooling.
//! The pooled tower outputs are flattened, concatenated, and fed through a
//! ReLU hidden layer — whose activations are the protein's fold feature —
//! then (train only) dropout, and finally a softmax output layer over the
//! fold classes.

mod checkpoint;

use std::io;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::{pad_batch, PaddedBatch};
use crate::encode::EncodedProtein;
use crate::nn::{
    batchnorm_backward, batchnorm_forward, conv1d_backward, conv1d_forward, dense_backward,
    dense_forward, dropout, dropout_backward, kmax_pool, kmax_pool_backward, relu, relu_backward,
    softmax_cross_entropy, softmax_cross_entropy_backward, softmax_rows, update_running_stats,
    BatchNormCache, ConvLayerParams, DropoutPlan, KmaxCache, Mode, NnError,
};
use crate::tensor::Tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("input has {found} channels, model expects {expected}")]
    InputChannels { expected: usize, found: usize },
    #[error("batch member '{id}' has no label")]
    Unlabeled { id: String },
    #[error("top-k of 0 requested")]
    ZeroTopK,
    #[error("top-k {k} exceeds {folds} folds")]
    TopKTooLarge { k: usize, folds: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: not a checkpoint file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported checkpoint version {found}")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: corrupt checkpoint: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

fn default_window_sizes() -> Vec<usize> {
    vec![6, 10]
}
fn default_filters() -> usize {
    10
}
fn default_depth() -> usize {
    10
}
fn default_kmax() -> usize {
    30
}
fn default_hidden() -> usize {
    500
}
fn default_folds() -> usize {
    1195
}
fn default_dropout() -> f64 {
    0.2
}
fn default_input_channels() -> usize {
    45
}

/// Architecture hyperparameters. Field order is the canonical serialization
/// order used inside checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_window_sizes")]
    pub window_sizes: Vec<usize>,
    #[serde(default = "default_filters")]
    pub filters_per_layer: usize,
    #[serde(default = "default_depth")]
    pub conv_depth: usize,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default = "default_hidden")]
    pub hidden_units: usize,
    #[serde(default = "default_folds")]
    pub num_folds: usize,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_input_channels")]
    pub input_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window_sizes: default_window_sizes(),
            filters_per_layer: default_filters(),
            conv_depth: default_depth(),
            kmax: default_kmax(),
            hidden_units: default_hidden(),
            num_folds: default_folds(),
            dropout_rate: default_dropout(),
            input_channels: default_input_channels(),
        }
    }
}

impl ModelConfig {
    /// Width of the concatenated pooled tower outputs
    /// (`filters_per_layer × kmax × |window_sizes|`).
    pub fn flatten_width(&self) -> usize {
        self.filters_per_layer * self.kmax * self.window_sizes.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::Config(reason));
        if self.window_sizes.is_empty() {
            return bad("at least one window size required".into());
        }
        if self.window_sizes.iter().any(|&w| w == 0) {
            return bad("window sizes must be positive".into());
        }
        if self.filters_per_layer == 0
            || self.conv_depth == 0
            || self.kmax == 0
            || self.hidden_units == 0
            || self.num_folds == 0
            || self.input_channels == 0
        {
            return bad("all extents must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }
}

/// All parameters of the network, plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    /// One tower per window size, `conv_depth` conv blocks each.
    pub towers: Vec<Vec<ConvLayerParams>>,
    /// `[flatten_width, hidden_units]`
    pub hidden_weight: Tensor,
    pub hidden_bias: Tensor,
    /// `[hidden_units, num_folds]`
    pub output_weight: Tensor,
    pub output_bias: Tensor,
}

impl ModelState {
    /// Zero-initialized parameters with the shapes `config` dictates
    /// (normalization at identity).
    pub fn with_shapes(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let towers = config
            .window_sizes
            .iter()
            .map(|&w| {
                (0..config.conv_depth)
                    .map(|layer| {
                        let c_in = if layer == 0 {
                            config.input_channels
                        } else {
                            config.filters_per_layer
                        };
                        ConvLayerParams::zeros(config.filters_per_layer, c_in, w)
                    })
                    .collect()
            })
            .collect();
        let flatten = config.flatten_width();
        Ok(ModelState {
            hidden_weight: Tensor::zeros(&[flatten, config.hidden_units]),
            hidden_bias: Tensor::zeros(&[config.hidden_units]),
            output_weight: Tensor::zeros(&[config.hidden_units, config.num_folds]),
            output_bias: Tensor::zeros(&[config.num_folds]),
            towers,
            config,
        })
    }

    /// The tensors a gradient step updates, in the canonical order
    /// [`ModelGradients`] mirrors: per tower, per layer — kernel, bias,
    /// gamma, beta — then hidden weight/bias and output weight/bias.
    pub fn trainable_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for tower in &self.towers {
            for layer in tower {
                out.extend([&layer.kernel, &layer.bias, &layer.gamma, &layer.beta]);
            }
        }
        out.extend([
            &self.hidden_weight,
            &self.hidden_bias,
            &self.output_weight,
            &self.output_bias,
        ]);
        out
    }

    /// Mutable view over the same tensors as [`Self::trainable_tensors`],
    /// in the same order.
    pub fn trainable_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for tower in &mut self.towers {
            for layer in tower {
                out.extend([
                    &mut layer.kernel,
                    &mut layer.bias,
                    &mut layer.gamma,
                    &mut layer.beta,
                ]);
            }
        }
        out.extend([
            &mut self.hidden_weight,
            &mut self.hidden_bias,
            &mut self.output_weight,
            &mut self.output_bias,
        ]);
        out
    }

    /// Every tensor including normalization running statistics, in the
    /// fixed order checkpoints use: per tower, per layer — kernel, bias,
    /// gamma, beta, running_mean, running_var — then hidden weight/bias and
    /// output weight/bias.
    pub fn all_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for tower in &self.towers {
            for layer in tower {
                out.extend([
                    &layer.kernel,
                    &layer.bias,
                    &layer.gamma,
                    &layer.beta,
                    &layer.running_mean,
                    &layer.running_var,
                ]);
            }
        }
        out.extend([
            &self.hidden_weight,
            &self.hidden_bias,
            &self.output_weight,
            &self.output_bias,
        ]);
        out
    }

    pub fn all_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for tower in &mut self.towers {
            for layer in tower {
                out.extend([
                    &mut layer.kernel,
                    &mut layer.bias,
                    &mut layer.gamma,
                    &mut layer.beta,
                    &mut layer.running_mean,
                    &mut layer.running_var,
                ]);
            }
        }
        out.extend([
            &mut self.hidden_weight,
            &mut self.hidden_bias,
            &mut self.output_weight,
            &mut self.output_bias,
        ]);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.all_tensors().iter().all(|t| t.all_finite())
    }
}

/// Builds a model with fan-in-scaled uniform weights (zero biases, identity
/// normalization), reproducible from the seed. Draw order: towers in
/// window-size order, layers bottom-up, then hidden weights, then output
/// weights.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<ModelState, ModelError> {
    let mut state = ModelState::with_shapes(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = |tensor: &mut Tensor, fan_in: usize, fan_out: usize| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in tensor.data_mut() {
            *v = rng.random_range(-limit..limit);
        }
    };
    let filters = state.config.filters_per_layer;
    let input_channels = state.config.input_channels;
    for tower in &mut state.towers {
        for (l, layer) in tower.iter_mut().enumerate() {
            let c_in = if l == 0 { input_channels } else { filters };
            let window = layer.window();
            init(&mut layer.kernel, c_in * window, filters * window);
        }
    }
    let flatten = state.config.flatten_width();
    let hidden = state.config.hidden_units;
    let folds = state.config.num_folds;
    init(&mut state.hidden_weight, flatten, hidden);
    init(&mut state.output_weight, hidden, folds);
    Ok(state)
}

/// Probabilities over all folds plus the full descending ranking (ties
/// broken by ascending fold index).
#[derive(Debug, Clone)]
pub struct FoldPrediction {
    pub probabilities: Vec<f64>,
    pub ranked_folds: Vec<usize>,
}

impl FoldPrediction {
    fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let mut ranked: Vec<usize> = (0..probabilities.len()).collect();
        ranked.sort_by(|&i, &j| {
            probabilities[j]
                .partial_cmp(&probabilities[i])
                .expect("probabilities are finite")
                .then_with(|| i.cmp(&j))
        });
        FoldPrediction {
            probabilities,
            ranked_folds: ranked,
        }
    }

    pub fn top1(&self) -> usize {
        self.ranked_folds[0]
    }
}

/// The nonnegative hidden-layer activation vector that embeds a protein in
/// fold-feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct SFFeature {
    pub values: Vec<f64>,
}

impl SFFeature {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Per-protein outputs of an inference pass.
#[derive(Debug, Clone)]
pub struct InferOutput {
    pub predictions: Vec<FoldPrediction>,
    pub features: Vec<SFFeature>,
}

fn check_input(state: &ModelState, batch: &PaddedBatch) -> Result<(), ModelError> {
    let found = batch.features.dim(1);
    if found != state.config.input_channels {
        return Err(ModelError::InputChannels {
            expected: state.config.input_channels,
            found,
        });
    }
    Ok(())
}

/// Shared shape of both forward passes: tower activations to pooled
/// flatten, then the dense head. Train mode keeps every intermediate.
struct TowerTrace {
    /// Per layer: (conv output, batchnorm output, relu output, bn cache).
    layers: Vec<(Tensor, Tensor, Tensor, BatchNormCache)>,
    kmax_cache: KmaxCache,
}

/// Everything the backward pass needs from one train-mode forward pass.
pub struct ForwardTrace {
    towers: Vec<TowerTrace>,
    flat: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    dropped: Tensor,
    plan: DropoutPlan,
    probs: Tensor,
    labels: Vec<usize>,
    /// Mean cross-entropy of the batch, in nats.
    pub loss: f64,
}

impl ForwardTrace {
    pub fn probabilities(&self) -> &Tensor {
        &self.probs
    }

    /// Fold features (post-ReLU, pre-dropout) for batch row `b`.
    pub fn feature_row(&self, b: usize) -> &[f64] {
        self.hidden.row2(b)
    }
}

/// Copies pooled `[B, F, K]` tower outputs into their slice of the flat
/// `[B, F·K·T]` vector.
fn flatten_towers(pooled: &[Tensor]) -> Tensor {
    let batch = pooled[0].dim(0);
    let per_tower = pooled[0].dim(1) * pooled[0].dim(2);
    let mut flat = Tensor::zeros(&[batch, per_tower * pooled.len()]);
    for b in 0..batch {
        let row = flat.row2_mut(b);
        for (t, p) in pooled.iter().enumerate() {
            let src = &p.data()[b * per_tower..(b + 1) * per_tower];
            row[t * per_tower..(t + 1) * per_tower].copy_from_slice(src);
        }
    }
    flat
}

/// Inference over a padded batch: probabilities, ranked folds, and fold
/// features for every member. Running statistics are read, never written.
pub fn infer(state: &ModelState, batch: &PaddedBatch) -> Result<InferOutput, ModelError> {
    check_input(state, batch)?;
    let mut pooled = Vec::with_capacity(state.towers.len());
    for tower in &state.towers {
        let mut x = batch.features.clone();
        for layer in tower {
            let conv = conv1d_forward(&x, layer, &batch.mask)?;
            let (bn, _) = batchnorm_forward(&conv, layer, &batch.mask, Mode::Infer)?;
            x = relu(&bn);
        }
        let (p, _) = kmax_pool(&x, &batch.mask, state.config.kmax)?;
        pooled.push(p);
    }
    let flat = flatten_towers(&pooled);
    let hidden = relu(&dense_forward(&flat, &state.hidden_weight, &state.hidden_bias)?);
    let logits = dense_forward(&hidden, &state.output_weight, &state.output_bias)?;
    let probs = softmax_rows(&logits)?;

    let batch_size = batch.batch_size();
    let mut predictions = Vec::with_capacity(batch_size);
    let mut features = Vec::with_capacity(batch_size);
    for b in 0..batch_size {
        predictions.push(FoldPrediction::from_probabilities(probs.row2(b).to_vec()));
        features.push(SFFeature {
            values: hidden.row2(b).to_vec(),
        });
    }
    Ok(InferOutput {
        predictions,
        features,
    })
}

/// Train-mode forward pass: batch statistics are used and folded into the
/// running statistics, dropout is sampled from `rng`, and every
/// intermediate needed by [`backward`] is kept. All batch members must be
/// labeled.
pub fn train_forward(
    state: &mut ModelState,
    batch: &PaddedBatch,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardTrace, ModelError> {
    check_input(state, batch)?;
    let labels: Vec<usize> = batch
        .labels
        .iter()
        .zip(&batch.ids)
        .map(|(l, id)| l.ok_or_else(|| ModelError::Unlabeled { id: id.clone() }))
        .collect::<Result<_, _>>()?;

    let mut towers = Vec::with_capacity(state.towers.len());
    let mut pooled = Vec::with_capacity(state.towers.len());
    for tower in &mut state.towers {
        let mut layers = Vec::with_capacity(tower.len());
        let mut x = batch.features.clone();
        for layer in tower.iter_mut() {
            let conv = conv1d_forward(&x, layer, &batch.mask)?;
            let (bn, cache) = batchnorm_forward(&conv, layer, &batch.mask, Mode::Train)?;
            let cache = cache.expect("train mode returns a cache");
            update_running_stats(layer, &cache);
            let r = relu(&bn);
            layers.push((conv, bn, r.clone(), cache));
            x = r;
        }
        let (p, kmax_cache) = kmax_pool(&x, &batch.mask, state.config.kmax)?;
        pooled.push(p);
        towers.push(TowerTrace { layers, kmax_cache });
    }

    let flat = flatten_towers(&pooled);
    let hidden_pre = dense_forward(&flat, &state.hidden_weight, &state.hidden_bias)?;
    let hidden = relu(&hidden_pre);
    let plan = if state.config.dropout_rate > 0.0 {
        DropoutPlan::sample(hidden.len(), state.config.dropout_rate, rng)?
    } else {
        DropoutPlan::identity(hidden.len())
    };
    let dropped = dropout(&hidden, &plan)?;
    let logits = dense_forward(&dropped, &state.output_weight, &state.output_bias)?;
    let (probs, loss) = softmax_cross_entropy(&logits, &labels)?;

    Ok(ForwardTrace {
        towers,
        flat,
        hidden_pre,
        hidden,
        dropped,
        plan,
        probs,
        labels,
        loss,
    })
}

/// Gradients for every trainable tensor, in [`ModelState::trainable_tensors`]
/// order.
pub struct ModelGradients {
    pub tensors: Vec<Tensor>,
}

/// Backpropagates the mean cross-entropy of the traced batch through the
/// whole network.
pub fn backward(
    state: &ModelState,
    batch: &PaddedBatch,
    trace: &ForwardTrace,
) -> Result<ModelGradients, ModelError> {
    let d_logits = softmax_cross_entropy_backward(&trace.probs, &trace.labels);
    let out_grads = dense_backward(
        &trace.dropped,
        &state.output_weight,
        &state.output_bias,
        &d_logits,
    )?;
    let d_hidden = dropout_backward(&trace.plan, &out_grads.input)?;
    let d_hidden_pre = relu_backward(&trace.hidden_pre, &d_hidden);
    let hidden_grads = dense_backward(
        &trace.flat,
        &state.hidden_weight,
        &state.hidden_bias,
        &d_hidden_pre,
    )?;

    // Split the flat gradient back into per-tower pooled gradients.
    let batch_size = batch.batch_size();
    let filters = state.config.filters_per_layer;
    let kmax = state.config.kmax;
    let per_tower = filters * kmax;

    // Conv-block gradients accumulate in tower-major, layer-major order;
    // towers are processed top-down, so collect and reverse per tower.
    let mut tower_grads: Vec<Vec<Tensor>> = Vec::with_capacity(state.towers.len());
    for (t, (tower, tr)) in state.towers.iter().zip(&trace.towers).enumerate() {
        let mut d_pooled = Tensor::zeros(&[batch_size, filters, kmax]);
        for b in 0..batch_size {
            let src = &hidden_grads.input.row2(b)[t * per_tower..(t + 1) * per_tower];
            d_pooled.data_mut()[b * per_tower..(b + 1) * per_tower].copy_from_slice(src);
        }
        let mut d_x = kmax_pool_backward(&tr.kmax_cache, &d_pooled)?;

        let mut grads_rev: Vec<Tensor> = Vec::with_capacity(tower.len() * 4);
        for (l, layer) in tower.iter().enumerate().rev() {
            let (conv_out, bn_out, _relu_out, bn_cache) = &tr.layers[l];
            let d_bn_out = relu_backward(bn_out, &d_x);
            let bn_grads =
                batchnorm_backward(conv_out, layer, &batch.mask, Some(bn_cache), &d_bn_out)?;
            let layer_input = if l == 0 {
                &batch.features
            } else {
                &tr.layers[l - 1].2
            };
            let conv_grads = conv1d_backward(layer_input, layer, &batch.mask, &bn_grads.input)?;
            // Reverse of (kernel, bias, gamma, beta) so the final reversed
            // vector reads in canonical order.
            grads_rev.extend([bn_grads.beta, bn_grads.gamma, conv_grads.bias, conv_grads.kernel]);
            d_x = conv_grads.input;
        }
        grads_rev.reverse();
        tower_grads.push(grads_rev);
    }

    let mut tensors: Vec<Tensor> = tower_grads.into_iter().flatten().collect();
    tensors.extend([
        hidden_grads.weight,
        hidden_grads.bias,
        out_grads.weight,
        out_grads.bias,
    ]);
    Ok(ModelGradients { tensors })
}

/// Top-`k` folds with probabilities for a single protein, most probable
/// first, ties broken by ascending fold index.
pub fn predict_topk(
    state: &ModelState,
    protein: &EncodedProtein,
    k: usize,
) -> Result<Vec<(usize, f64)>, ModelError> {
    if k == 0 {
        return Err(ModelError::ZeroTopK);
    }
    if k > state.config.num_folds {
        return Err(ModelError::TopKTooLarge {
            k,
            folds: state.config.num_folds,
        });
    }
    let batch = pad_batch(&[protein]);
    let output = infer(state, &batch)?;
    let prediction = &output.predictions[0];
    Ok(prediction.ranked_folds[..k]
        .iter()
        .map(|&f| (f, prediction.probabilities[f]))
        .collect())
}

/// Runs inference over a whole corpus in length-sorted batches of at most
/// `capacity`, returning per-protein outputs in corpus order.
pub fn infer_corpus(
    state: &ModelState,
    proteins: &[EncodedProtein],
    capacity: usize,
) -> Result<InferOutput, ModelError> {
    assert!(capacity >= 1, "batch capacity must be positive");
    let mut order: Vec<usize> = (0..proteins.len()).collect();
    order.sort_by_key(|&i| (proteins[i].len(), i));

    let mut predictions: Vec<Option<FoldPrediction>> = vec![None; proteins.len()];
    let mut features: Vec<Option<SFFeature>> = vec![None; proteins.len()];
    for chunk in order.chunks(capacity) {
        let members: Vec<&EncodedProtein> = chunk.iter().map(|&i| &proteins[i]).collect();
        let batch = pad_batch(&members);
        let out = infer(state, &batch)?;
        for (slot, (p, f)) in chunk
            .iter()
            .zip(out.predictions.into_iter().zip(out.features))
        {
            predictions[*slot] = Some(p);
            features[*slot] = Some(f);
        }
    }
    Ok(InferOutput {
        predictions: predictions.into_iter().map(Option::unwrap).collect(),
        features: features.into_iter().map(Option::unwrap).collect(),
    })
}
