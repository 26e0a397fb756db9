//! Sequence-perturbation robustness experiments.
//!
//! Given a trained model and a wild-type protein, this module generates
//! randomly mutated / inserted / deleted sequence variants plus unrelated
//! control sequences, measures how far each drifts from the wild type in
//! fold-feature space (symmetrized KL divergence), tests variant-vs-control
//! separation with a two-sided rank-sum test, and scans N-terminal prefixes
//! to find how much of a sequence the model needs before its fold call
//! settles.
//!
//! Derived sequences (variants and prefixes) are re-encoded from their
//! residue strings. The one-hot block always reflects the edited sequence;
//! annotation channels are inherited from the wild type's rows at the
//! positions that survive the edit, because regenerating profiles per edit
//! is out of scope. Inserted residues carry zero annotation, and
//! [`ProfileRows::Zero`] suppresses the inherited profile block entirely
//! for callers who prefer no profile signal over an approximate one.

mod ranksum;

pub use ranksum::{rank_sum_test, RankSumMethod, RankSumTest, EXACT_LIMIT};

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::{distance, AnalyzeError, DistanceMetric};
use crate::encode::{
    encode_synthetic_sequence, residue_index, EncodeError, EncodedProtein, FeatureProvenance,
    ALPHABET, CHANNELS, PROFILE_RANGE,
};
use crate::model::{infer_corpus, ModelError, ModelState};
use crate::tensor::Tensor;

/// Everything that can go wrong while generating or measuring perturbations.
#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("sequence has {len} residues; perturbation needs at least 2")]
    SequenceTooShort { len: usize },
    #[error("no corpus sequence has length in [{min}, {max}] and synthetic top-up is disabled")]
    NoEligibleControls { min: usize, max: usize },
    #[error("invalid options: {reason}")]
    BadOptions { reason: String },
    #[error("malformed variant: {reason}")]
    MalformedVariant { reason: String },
    #[error("prefix length {k} outside 1..={len}")]
    BadPrefix { k: usize, len: usize },
    #[error("the {side} group of the rank-sum test is empty")]
    EmptyGroup { side: &'static str },
    #[error("rank-sum test input contains a non-finite value")]
    NonFiniteSample,
    #[error("truncation scan needs at least one protein")]
    EmptyCorpus,
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analyze(#[from] AnalyzeError),
    #[error("failed to write report: {0}")]
    Io(#[from] std::io::Error),
}

/// The three edit families applied to a wild-type sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    /// One residue substituted in place.
    Mutation,
    /// 1..=max_indel_total residues inserted at random slots.
    Insertion,
    /// 1..=max_indel_total residues removed at random positions.
    Deletion,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [
        VariantKind::Mutation,
        VariantKind::Insertion,
        VariantKind::Deletion,
    ];

    pub fn label(self) -> &'static str {
        match self {
            VariantKind::Mutation => "mutation",
            VariantKind::Insertion => "insertion",
            VariantKind::Deletion => "deletion",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One edited sequence plus the per-position map back to the wild type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub kind: VariantKind,
    pub residues: String,
    /// For each edited position, the wild-type position whose annotation
    /// channels it inherits; `None` marks an inserted residue.
    pub origin: Vec<Option<usize>>,
}

/// A wild type's full perturbation experiment input: its edited variants
/// and the unrelated control sequences they are compared against.
#[derive(Debug, Clone)]
pub struct PerturbationSet {
    /// Wild-type sequence id.
    pub wild_type: String,
    pub variants: Vec<Variant>,
    pub controls: Vec<EncodedProtein>,
}

/// Knobs for [`generate_variants`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantOptions {
    /// Edits drawn per kind before deduplication.
    pub repeats_per_kind: usize,
    /// Largest total number of residues one indel variant may add or remove.
    pub max_indel_total: usize,
}

impl Default for VariantOptions {
    fn default() -> Self {
        VariantOptions {
            repeats_per_kind: 50,
            max_indel_total: 20,
        }
    }
}

fn random_residue<R: Rng>(rng: &mut R) -> u8 {
    ALPHABET[rng.random_range(0..ALPHABET.len())]
}

fn mutate<R: Rng>(base: &[u8], rng: &mut R) -> Variant {
    let position = rng.random_range(0..base.len());
    let mut residues = base.to_vec();
    residues[position] = random_residue(rng);
    Variant {
        kind: VariantKind::Mutation,
        residues: String::from_utf8(residues).expect("alphabet is ASCII"),
        origin: (0..base.len()).map(Some).collect(),
    }
}

fn insert<R: Rng>(base: &[u8], max_total: usize, rng: &mut R) -> Variant {
    let total = rng.random_range(1..=max_total);
    let mut residues = base.to_vec();
    let mut origin: Vec<Option<usize>> = (0..base.len()).map(Some).collect();
    for _ in 0..total {
        let slot = rng.random_range(0..=residues.len());
        residues.insert(slot, random_residue(rng));
        origin.insert(slot, None);
    }
    Variant {
        kind: VariantKind::Insertion,
        residues: String::from_utf8(residues).expect("alphabet is ASCII"),
        origin,
    }
}

fn delete<R: Rng>(base: &[u8], max_total: usize, rng: &mut R) -> Variant {
    // Never delete the whole sequence: cap the edit at len - 1 residues.
    let total = rng.random_range(1..=max_total).min(base.len() - 1);
    let mut removed = (0..base.len()).choose_multiple(rng, total);
    removed.sort_unstable();
    let mut residues = Vec::with_capacity(base.len() - total);
    let mut origin = Vec::with_capacity(base.len() - total);
    let mut next_removed = 0;
    for (i, &r) in base.iter().enumerate() {
        if next_removed < removed.len() && removed[next_removed] == i {
            next_removed += 1;
        } else {
            residues.push(r);
            origin.push(Some(i));
        }
    }
    Variant {
        kind: VariantKind::Deletion,
        residues: String::from_utf8(residues).expect("alphabet is ASCII"),
        origin,
    }
}

/// Draws `repeats_per_kind` independent edits of each kind from the given
/// sequence, deterministically from `seed`, then removes variants whose
/// edited sequence exactly duplicates an earlier one.
pub fn generate_variants(
    sequence: &str,
    options: &VariantOptions,
    seed: u64,
) -> Result<Vec<Variant>, PerturbError> {
    if sequence.len() < 2 {
        return Err(PerturbError::SequenceTooShort {
            len: sequence.len(),
        });
    }
    if options.repeats_per_kind == 0 || options.max_indel_total == 0 {
        return Err(PerturbError::BadOptions {
            reason: "repeats_per_kind and max_indel_total must be positive".into(),
        });
    }
    let base = sequence.as_bytes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<String> = HashSet::new();
    let mut variants = Vec::new();
    for kind in VariantKind::ALL {
        for _ in 0..options.repeats_per_kind {
            let variant = match kind {
                VariantKind::Mutation => mutate(base, &mut rng),
                VariantKind::Insertion => insert(base, options.max_indel_total, &mut rng),
                VariantKind::Deletion => delete(base, options.max_indel_total, &mut rng),
            };
            if seen.insert(variant.residues.clone()) {
                variants.push(variant);
            }
        }
    }
    Ok(variants)
}

/// Knobs for [`generate_controls`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlOptions {
    pub count: usize,
    /// Inclusive control length range.
    pub min_length: usize,
    pub max_length: usize,
    /// Synthesize uniform-random sequences when the corpus has too few
    /// members in range.
    pub allow_synthetic: bool,
}

impl Default for ControlOptions {
    fn default() -> Self {
        ControlOptions {
            count: 500,
            min_length: 80,
            max_length: 120,
            allow_synthetic: true,
        }
    }
}

/// Samples control sequences from the corpus members whose length falls in
/// the configured range (without replacement), topping up with synthesized
/// uniform-random sequences when allowed and needed. Deterministic from
/// `seed`.
pub fn generate_controls(
    corpus: &[EncodedProtein],
    options: &ControlOptions,
    seed: u64,
) -> Result<Vec<EncodedProtein>, PerturbError> {
    if options.min_length == 0 || options.max_length < options.min_length {
        return Err(PerturbError::BadOptions {
            reason: format!(
                "control length range [{}, {}] is empty",
                options.min_length, options.max_length
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eligible: Vec<&EncodedProtein> = corpus
        .iter()
        .filter(|p| p.len() >= options.min_length && p.len() <= options.max_length)
        .collect();
    if eligible.is_empty() && !options.allow_synthetic && options.count > 0 {
        return Err(PerturbError::NoEligibleControls {
            min: options.min_length,
            max: options.max_length,
        });
    }
    let take = options.count.min(eligible.len());
    let mut controls: Vec<EncodedProtein> = eligible
        .iter()
        .choose_multiple(&mut rng, take)
        .into_iter()
        .map(|p| (*p).clone())
        .collect();
    if options.allow_synthetic {
        for i in controls.len()..options.count {
            let len = rng.random_range(options.min_length..=options.max_length);
            let residues: Vec<u8> = (0..len).map(|_| random_residue(&mut rng)).collect();
            let sequence = String::from_utf8(residues).expect("alphabet is ASCII");
            controls.push(encode_synthetic_sequence(
                &format!("ctrl{i:03}"),
                &sequence,
                None,
            )?);
        }
    }
    Ok(controls)
}

/// How derived sequences fill their profile block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileRows {
    /// Inherit the wild type's profile rows at mapped positions; inserted
    /// residues get zeros.
    #[default]
    InheritWildType,
    /// Zero the profile block of every derived sequence.
    Zero,
}

/// Shared feature assembly for edited sequences: one-hot from the residue
/// string, annotation channels inherited row-wise from the wild type.
fn encode_derived(
    wild_type: &EncodedProtein,
    id: &str,
    residues: &str,
    origin: &[Option<usize>],
    profile: ProfileRows,
) -> Result<EncodedProtein, PerturbError> {
    let len = residues.len();
    if len == 0 {
        return Err(PerturbError::MalformedVariant {
            reason: "edited sequence is empty".into(),
        });
    }
    if origin.len() != len {
        return Err(PerturbError::MalformedVariant {
            reason: format!(
                "origin map has {} entries for {len} residues",
                origin.len()
            ),
        });
    }
    let mut features = Tensor::zeros(&[len, CHANNELS]);
    for (i, letter) in residues.bytes().enumerate() {
        let slot = residue_index(letter).ok_or_else(|| EncodeError::UnknownResidue {
            id: id.to_string(),
            position: i + 1,
            letter: letter as char,
        })?;
        let row = features.row2_mut(i);
        row[slot] = 1.0;
        if let Some(j) = origin[i] {
            if j >= wild_type.len() {
                return Err(PerturbError::MalformedVariant {
                    reason: format!(
                        "origin {j} at position {i} exceeds wild-type length {}",
                        wild_type.len()
                    ),
                });
            }
            let source = wild_type.features.row2(j);
            row[PROFILE_RANGE.start..].copy_from_slice(&source[PROFILE_RANGE.start..]);
            if profile == ProfileRows::Zero {
                row[PROFILE_RANGE].fill(0.0);
            }
        }
    }
    Ok(EncodedProtein {
        id: id.to_string(),
        residues: residues.to_string(),
        features,
        label: wild_type.label,
        provenance: FeatureProvenance {
            profile: wild_type.provenance.profile && profile == ProfileRows::InheritWildType,
            ..wild_type.provenance
        },
    })
}

/// Encodes one variant of the given wild type.
pub fn encode_variant(
    wild_type: &EncodedProtein,
    variant: &Variant,
    profile: ProfileRows,
    id: &str,
) -> Result<EncodedProtein, PerturbError> {
    encode_derived(wild_type, id, &variant.residues, &variant.origin, profile)
}

/// Encodes the first `k` residues of the wild type, inheriting annotation
/// rows 1..=k.
pub fn encode_prefix(
    wild_type: &EncodedProtein,
    k: usize,
    profile: ProfileRows,
    id: &str,
) -> Result<EncodedProtein, PerturbError> {
    if k == 0 || k > wild_type.len() {
        return Err(PerturbError::BadPrefix {
            k,
            len: wild_type.len(),
        });
    }
    let origin: Vec<Option<usize>> = (0..k).map(Some).collect();
    encode_derived(wild_type, id, &wild_type.residues[..k], &origin, profile)
}

/// Knobs shared by the divergence experiment and the truncation scan.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentOptions {
    pub profile: ProfileRows,
    /// Largest batch handed to the model at once.
    pub batch_capacity: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            profile: ProfileRows::InheritWildType,
            batch_capacity: 64,
        }
    }
}

/// One measured sequence of a divergence experiment.
#[derive(Debug, Clone)]
pub struct DivergenceRow {
    pub sequence_id: String,
    /// `mutation`, `insertion`, `deletion`, or `control`.
    pub kind: &'static str,
    pub length: usize,
    /// Symmetrized KL divergence of the sequence's fold feature from the
    /// wild type's.
    pub kl_divergence: f64,
}

/// Divergence of every variant and control from one wild type, with the
/// variant-vs-control separation test.
#[derive(Debug, Clone)]
pub struct DivergenceReport {
    pub wild_type: String,
    pub rows: Vec<DivergenceRow>,
    pub variant_median: f64,
    pub control_median: f64,
    pub test: RankSumTest,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Extracts fold features for the wild type, all variants, and all
/// controls, measures each sequence's symmetrized KL divergence from the
/// wild type, and rank-sum-tests variants against controls.
pub fn divergence_experiment(
    state: &ModelState,
    wild_type: &EncodedProtein,
    set: &PerturbationSet,
    options: &ExperimentOptions,
) -> Result<DivergenceReport, PerturbError> {
    if set.variants.is_empty() {
        return Err(PerturbError::EmptyGroup { side: "variant" });
    }
    if set.controls.is_empty() {
        return Err(PerturbError::EmptyGroup { side: "control" });
    }
    let encoded: Vec<EncodedProtein> = set
        .variants
        .iter()
        .enumerate()
        .map(|(i, v)| {
            encode_variant(
                wild_type,
                v,
                options.profile,
                &format!("{}:{}{:03}", set.wild_type, v.kind.label(), i),
            )
        })
        .collect::<Result<_, _>>()?;

    let wt_out = infer_corpus(state, std::slice::from_ref(wild_type), options.batch_capacity)?;
    let wt_feature = &wt_out.features[0].values;
    let variant_out = infer_corpus(state, &encoded, options.batch_capacity)?;
    let control_out = infer_corpus(state, &set.controls, options.batch_capacity)?;

    let mut rows = Vec::with_capacity(encoded.len() + set.controls.len());
    let mut variant_kl = Vec::with_capacity(encoded.len());
    for (protein, feature) in encoded.iter().zip(&variant_out.features) {
        let kind = set.variants[variant_kl.len()].kind.label();
        let kl = distance(DistanceMetric::SymmetricDivergence, wt_feature, &feature.values)?;
        variant_kl.push(kl);
        rows.push(DivergenceRow {
            sequence_id: protein.id.clone(),
            kind,
            length: protein.len(),
            kl_divergence: kl,
        });
    }
    let mut control_kl = Vec::with_capacity(set.controls.len());
    for (protein, feature) in set.controls.iter().zip(&control_out.features) {
        let kl = distance(DistanceMetric::SymmetricDivergence, wt_feature, &feature.values)?;
        control_kl.push(kl);
        rows.push(DivergenceRow {
            sequence_id: protein.id.clone(),
            kind: "control",
            length: protein.len(),
            kl_divergence: kl,
        });
    }
    let test = rank_sum_test(&variant_kl, &control_kl)?;
    Ok(DivergenceReport {
        wild_type: set.wild_type.clone(),
        rows,
        variant_median: median(variant_kl),
        control_median: median(control_kl),
        test,
    })
}

/// Writes divergence rows as tab-separated text for external plotting.
pub fn write_divergence_tsv(report: &DivergenceReport, path: &Path) -> Result<(), PerturbError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "sequence_id\tkind\tlength\tkl_d")?;
    for row in &report.rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            row.sequence_id, row.kind, row.length, row.kl_divergence
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Knobs for [`truncation_scan`].
#[derive(Debug, Clone, Copy)]
pub struct TruncationOptions {
    /// Prefix length increment in residues.
    pub step: usize,
    pub profile: ProfileRows,
    pub batch_capacity: usize,
}

impl Default for TruncationOptions {
    fn default() -> Self {
        TruncationOptions {
            step: 1,
            profile: ProfileRows::InheritWildType,
            batch_capacity: 64,
        }
    }
}

/// One protein's truncation result.
#[derive(Debug, Clone)]
pub struct TruncationRow {
    pub sequence_id: String,
    pub length: usize,
    /// Shortest scanned prefix (residues) from which every longer scanned
    /// prefix predicts the full-sequence fold.
    pub stable_prefix: usize,
    /// `stable_prefix / length`, in (0, 1].
    pub fraction: f64,
}

/// Truncation results for a corpus.
#[derive(Debug, Clone)]
pub struct TruncationReport {
    pub rows: Vec<TruncationRow>,
    pub mean_fraction: f64,
}

/// Index of the first element of the longest constant suffix. The scan
/// demands agreement from some prefix *onward*, not first agreement: a
/// prediction that matches early, flips away, and returns only counts from
/// where it returns.
fn stable_suffix_start(predictions: &[usize]) -> usize {
    let last = *predictions.last().expect("at least the full sequence");
    let mut start = predictions.len() - 1;
    while start > 0 && predictions[start - 1] == last {
        start -= 1;
    }
    start
}

/// Predicts the fold of every length-`step` prefix ladder of each protein
/// and reports the smallest prefix fraction from which the top-1 fold
/// matches the full-sequence fold for all longer scanned prefixes.
pub fn truncation_scan(
    state: &ModelState,
    corpus: &[EncodedProtein],
    options: &TruncationOptions,
) -> Result<TruncationReport, PerturbError> {
    if options.step == 0 {
        return Err(PerturbError::BadOptions {
            reason: "truncation step must be positive".into(),
        });
    }
    if corpus.is_empty() {
        return Err(PerturbError::EmptyCorpus);
    }
    let mut rows = Vec::with_capacity(corpus.len());
    for protein in corpus {
        let len = protein.len();
        let mut lengths: Vec<usize> = (options.step..=len).step_by(options.step).collect();
        if lengths.last() != Some(&len) {
            lengths.push(len);
        }
        let prefixes: Vec<EncodedProtein> = lengths
            .iter()
            .map(|&k| {
                encode_prefix(
                    protein,
                    k,
                    options.profile,
                    &format!("{}@{k}", protein.id),
                )
            })
            .collect::<Result<_, _>>()?;
        let out = infer_corpus(state, &prefixes, options.batch_capacity)?;
        let predictions: Vec<usize> = out.predictions.iter().map(|p| p.top1()).collect();
        let idx = stable_suffix_start(&predictions);
        rows.push(TruncationRow {
            sequence_id: protein.id.clone(),
            length: len,
            stable_prefix: lengths[idx],
            fraction: lengths[idx] as f64 / len as f64,
        });
    }
    let mean_fraction = rows.iter().map(|r| r.fraction).sum::<f64>() / rows.len() as f64;
    Ok(TruncationReport {
        rows,
        mean_fraction,
    })
}

/// Writes per-protein truncation rows plus a trailing summary line.
pub fn write_truncation_tsv(report: &TruncationReport, path: &Path) -> Result<(), PerturbError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "sequence_id\tlength\tstable_prefix\tfraction")?;
    for row in &report.rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            row.sequence_id, row.length, row.stable_prefix, row.fraction
        )?;
    }
    writeln!(out, "# mean_fraction\t{}", report.mean_fraction)?;
    out.flush()?;
    Ok(())
}
