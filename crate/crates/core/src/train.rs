//! Length-binned mini-batch training with SGD + momentum, plus top-k and
//! fold-size-group evaluation.
//!
//! Proteins are grouped into length bins so that padding stays small; each
//! outer pass visits every bin in a seed-shuffled order and trains it for a
//! fixed number of inner epochs in capacity-limited batches. After each
//! pass, accuracy over the training corpus — and over a validation corpus
//! when one is given — is appended to the log, and the parameters with the
//! best validation top-1 seen so far are retained.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::{make_bins, pad_batch};
use crate::encode::EncodedProtein;
use crate::model::{backward, infer_corpus, train_forward, ModelError, ModelState};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("protein '{id}' has no fold label")]
    Unlabeled { id: String },
    #[error("protein '{id}' labeled {label} but the model has {folds} folds")]
    LabelOutOfRange {
        id: String,
        label: usize,
        folds: usize,
    },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("non-finite loss at pass {pass}, bin {bin}, batch starting with '{id}'")]
    NonFiniteLoss { pass: usize, bin: usize, id: String },
    #[error("fold {fold} absent from the training fold sizes")]
    MissingFoldSize { fold: usize },
    #[error("validation fraction {0} outside [0, 1)")]
    BadFraction(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn default_bin_size() -> usize {
    15
}
fn default_total_epochs() -> usize {
    100
}
fn default_epochs_per_bin() -> usize {
    3
}
fn default_capacity() -> usize {
    64
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_momentum() -> f64 {
    0.9
}

/// How a training run proceeds: binning, epoch structure, optimizer, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    #[serde(default = "default_bin_size")]
    pub bin_size: usize,
    /// Outer passes over all bins. Zero is a no-op run: unchanged
    /// parameters, empty log.
    #[serde(default = "default_total_epochs")]
    pub total_epochs: usize,
    /// Inner epochs trained on each bin per visit.
    #[serde(default = "default_epochs_per_bin")]
    pub epochs_per_bin_visit: usize,
    /// Largest mini-batch cut from a bin.
    #[serde(default = "default_capacity")]
    pub batch_capacity: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            bin_size: default_bin_size(),
            total_epochs: default_total_epochs(),
            epochs_per_bin_visit: default_epochs_per_bin(),
            batch_capacity: default_capacity(),
            learning_rate: default_learning_rate(),
            momentum: default_momentum(),
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Schedule(m));
        if self.bin_size == 0 || self.epochs_per_bin_visit == 0 || self.batch_capacity == 0 {
            return bad("bin size, inner epochs, and batch capacity must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        Ok(())
    }
}

/// Accuracy of one `k`: the fraction of proteins whose true fold appears
/// among the `k` most probable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopkAccuracy {
    pub k: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Top-1/5/10 in one record, as logged after each pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
}

impl AccuracySummary {
    fn from_topk(topk: &[TopkAccuracy]) -> Self {
        AccuracySummary {
            top1: topk[0].accuracy,
            top5: topk[1].accuracy,
            top10: topk[2].accuracy,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    /// One gradient step.
    Batch {
        pass: usize,
        bin: usize,
        inner_epoch: usize,
        batch: usize,
        loss: f64,
    },
    /// End of one outer pass: mean batch loss plus accuracies.
    Pass {
        pass: usize,
        mean_loss: f64,
        train: AccuracySummary,
        #[serde(skip_serializing_if = "Option::is_none")]
        validation: Option<AccuracySummary>,
    },
}

/// Result of a training run.
pub struct TrainOutcome {
    /// The retained parameters: best validation top-1 when a validation
    /// corpus was given, otherwise the final parameters.
    pub state: ModelState,
    pub log: Vec<LogRecord>,
    /// Pass index the retained state comes from (when validating).
    pub best_pass: Option<usize>,
    /// Its validation top-1.
    pub best_top1: Option<f64>,
}

fn check_labels(corpus: &[EncodedProtein], folds: usize) -> Result<(), TrainError> {
    for p in corpus {
        let label = p.label.ok_or_else(|| TrainError::Unlabeled { id: p.id.clone() })?;
        if label >= folds {
            return Err(TrainError::LabelOutOfRange {
                id: p.id.clone(),
                label,
                folds,
            });
        }
    }
    Ok(())
}

/// Trains `state` on `corpus` under `schedule`. Identical
/// (corpus, schedule, seed, initial state) always produce identical logs
/// and parameters. Training accuracy is evaluated after every pass; when
/// `validation` is given its accuracy is logged too and the best-top-1
/// parameters are kept.
pub fn train(
    state: ModelState,
    corpus: &[EncodedProtein],
    schedule: &TrainSchedule,
    validation: Option<&[EncodedProtein]>,
) -> Result<TrainOutcome, TrainError> {
    schedule.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let folds = state.config.num_folds;
    check_labels(corpus, folds)?;
    if let Some(val) = validation {
        check_labels(val, folds)?;
    }

    let mut state = state;
    let bins = make_bins(corpus, schedule.bin_size);
    let mut velocity: Vec<Tensor> = state
        .trainable_tensors()
        .iter()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, ModelState)> = None;

    for pass in 0..schedule.total_epochs {
        let mut bin_order: Vec<usize> = (0..bins.len()).collect();
        bin_order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;

        for &b in &bin_order {
            let bin = &bins[b];
            for inner_epoch in 0..schedule.epochs_per_bin_visit {
                let mut members = bin.members.clone();
                members.shuffle(&mut rng);
                for (batch_idx, chunk) in members.chunks(schedule.batch_capacity).enumerate() {
                    let proteins: Vec<&EncodedProtein> =
                        chunk.iter().map(|&i| &corpus[i]).collect();
                    let batch = pad_batch(&proteins);
                    let trace = train_forward(&mut state, &batch, &mut rng)?;
                    if !trace.loss.is_finite() {
                        return Err(TrainError::NonFiniteLoss {
                            pass,
                            bin: bin.bin_index,
                            id: batch.ids[0].clone(),
                        });
                    }
                    let grads = backward(&state, &batch, &trace)?;
                    for ((v, g), w) in velocity
                        .iter_mut()
                        .zip(&grads.tensors)
                        .zip(state.trainable_tensors_mut())
                    {
                        v.scale(schedule.momentum);
                        v.add_scaled(1.0, g);
                        w.add_scaled(-schedule.learning_rate, v);
                    }
                    loss_sum += trace.loss;
                    loss_count += 1;
                    log.push(LogRecord::Batch {
                        pass,
                        bin: bin.bin_index,
                        inner_epoch,
                        batch: batch_idx,
                        loss: trace.loss,
                    });
                }
            }
        }

        let train_acc = AccuracySummary::from_topk(&evaluate_topk(
            &state,
            corpus,
            &[1, 5, 10],
            schedule.batch_capacity,
        )?);
        let val_acc = match validation {
            Some(val) => {
                let summary = AccuracySummary::from_topk(&evaluate_topk(
                    &state,
                    val,
                    &[1, 5, 10],
                    schedule.batch_capacity,
                )?);
                if best.as_ref().is_none_or(|(_, top1, _)| summary.top1 > *top1) {
                    best = Some((pass, summary.top1, state.clone()));
                }
                Some(summary)
            }
            None => None,
        };
        log.push(LogRecord::Pass {
            pass,
            mean_loss: loss_sum / loss_count.max(1) as f64,
            train: train_acc,
            validation: val_acc,
        });
    }

    let (best_pass, best_top1, state) = match best {
        Some((pass, top1, best_state)) => (Some(pass), Some(top1), best_state),
        None => (None, None, state),
    };
    Ok(TrainOutcome {
        state,
        log,
        best_pass,
        best_top1,
    })
}

/// Fraction of proteins whose true fold is among the `k` most probable
/// predictions, for each requested `k` (clamped to the fold count, so the
/// result is defined for any `k` and monotone nondecreasing in it).
pub fn evaluate_topk(
    state: &ModelState,
    corpus: &[EncodedProtein],
    ks: &[usize],
    batch_capacity: usize,
) -> Result<Vec<TopkAccuracy>, TrainError> {
    check_labels(corpus, state.config.num_folds)?;
    let output = infer_corpus(state, corpus, batch_capacity.max(1))?;
    let mut correct = vec![0usize; ks.len()];
    for (p, prediction) in corpus.iter().zip(&output.predictions) {
        let label = p.label.expect("labels checked above");
        let rank = prediction
            .ranked_folds
            .iter()
            .position(|&f| f == label)
            .expect("ranking covers every fold");
        for (slot, &k) in ks.iter().enumerate() {
            if rank < k {
                correct[slot] += 1;
            }
        }
    }
    Ok(ks
        .iter()
        .zip(correct)
        .map(|(&k, correct)| TopkAccuracy {
            k,
            correct,
            total: corpus.len(),
            accuracy: if corpus.is_empty() {
                0.0
            } else {
                correct as f64 / corpus.len() as f64
            },
        })
        .collect())
}

/// Fold-population class a test protein belongs to, by how many training
/// proteins its fold has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    /// At most 5 training proteins.
    Small,
    /// 6 to 50.
    Medium,
    /// More than 50.
    Large,
}

impl SizeClass {
    pub fn of(fold_size: usize) -> SizeClass {
        match fold_size {
            0..=5 => SizeClass::Small,
            6..=50 => SizeClass::Medium,
            _ => SizeClass::Large,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }

    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];
}

/// Per-class accuracy of `corpus` under `state`, where each protein's class
/// comes from its fold's training population in `fold_sizes`.
#[derive(Debug, Clone)]
pub struct GroupAccuracy {
    pub class: SizeClass,
    pub count: usize,
    pub accuracies: Vec<TopkAccuracy>,
}

/// Number of proteins per fold, for [`group_evaluate`].
pub fn fold_sizes(corpus: &[EncodedProtein]) -> Result<HashMap<usize, usize>, TrainError> {
    let mut sizes = HashMap::new();
    for p in corpus {
        let label = p.label.ok_or_else(|| TrainError::Unlabeled { id: p.id.clone() })?;
        *sizes.entry(label).or_insert(0) += 1;
    }
    Ok(sizes)
}

/// Splits `corpus` into the three fold-size classes and evaluates each.
/// All three classes are always returned (possibly with zero members), so
/// the class counts sum to the corpus size.
pub fn group_evaluate(
    state: &ModelState,
    corpus: &[EncodedProtein],
    fold_sizes: &HashMap<usize, usize>,
    ks: &[usize],
    batch_capacity: usize,
) -> Result<Vec<GroupAccuracy>, TrainError> {
    check_labels(corpus, state.config.num_folds)?;
    let mut groups: HashMap<SizeClass, Vec<EncodedProtein>> = HashMap::new();
    for p in corpus {
        let label = p.label.expect("labels checked above");
        let size = *fold_sizes
            .get(&label)
            .ok_or(TrainError::MissingFoldSize { fold: label })?;
        groups.entry(SizeClass::of(size)).or_default().push(p.clone());
    }
    SizeClass::ALL
        .iter()
        .map(|&class| {
            let members = groups.get(&class).map(Vec::as_slice).unwrap_or(&[]);
            Ok(GroupAccuracy {
                class,
                count: members.len(),
                accuracies: evaluate_topk(state, members, ks, batch_capacity)?,
            })
        })
        .collect()
}

/// Moves a labeled corpus into (training, validation) parts: within each
/// fold, `floor(count × validation_fraction)` members are drawn for
/// validation, so single-member folds always stay in training.
pub fn split_train_validation(
    corpus: Vec<EncodedProtein>,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<EncodedProtein>, Vec<EncodedProtein>), TrainError> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(TrainError::BadFraction(validation_fraction));
    }
    let mut by_fold: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, p) in corpus.iter().enumerate() {
        let label = p.label.ok_or_else(|| TrainError::Unlabeled { id: p.id.clone() })?;
        by_fold.entry(label).or_default().push(i);
    }
    let mut folds: Vec<usize> = by_fold.keys().copied().collect();
    folds.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut to_validation = vec![false; corpus.len()];
    for fold in folds {
        let mut members = by_fold.remove(&fold).expect("fold key came from the map");
        members.shuffle(&mut rng);
        let n_val = (members.len() as f64 * validation_fraction).floor() as usize;
        for &i in &members[..n_val] {
            to_validation[i] = true;
        }
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (i, p) in corpus.into_iter().enumerate() {
        if to_validation[i] {
            validation.push(p);
        } else {
            train.push(p);
        }
    }
    Ok((train, validation))
}

/// Writes the log as line-delimited JSON, one record per line.
pub fn write_training_log(log: &[LogRecord], path: &Path) -> Result<(), TrainError> {
    let io_err = |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for record in log {
        let line = serde_json::to_string(record).expect("log records serialize");
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
