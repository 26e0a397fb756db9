//! Grouping variable-length proteins into zero-padded, masked mini-batches.
//!
//! Proteins are binned by length interval — a protein of length `L` lands in
//! bin `floor((L − 1) / bin_size)` — so that batch members have similar
//! lengths and padding stays small.

use crate::encode::EncodedProtein;
use crate::tensor::{Mask, Tensor};

/// One length interval and the corpus positions of its members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthBin {
    pub bin_index: usize,
    /// Indices into the corpus slice the bins were built from.
    pub members: Vec<usize>,
    pub max_length: usize,
}

/// Partitions `proteins` into length bins; empty bins are omitted and the
/// result is sorted by bin index. Every protein lands in exactly one bin.
pub fn make_bins(proteins: &[EncodedProtein], bin_size: usize) -> Vec<LengthBin> {
    assert!(bin_size >= 1, "bin size must be positive");
    let mut bins: Vec<LengthBin> = Vec::new();
    for (i, p) in proteins.iter().enumerate() {
        debug_assert!(p.len() >= 1);
        let bin_index = (p.len() - 1) / bin_size;
        match bins.binary_search_by_key(&bin_index, |b| b.bin_index) {
            Ok(pos) => {
                bins[pos].members.push(i);
                bins[pos].max_length = bins[pos].max_length.max(p.len());
            }
            Err(pos) => bins.insert(
                pos,
                LengthBin {
                    bin_index,
                    members: vec![i],
                    max_length: p.len(),
                },
            ),
        }
    }
    bins
}

/// A mini-batch ready for the network: channel-major features, a validity
/// mask, and per-member labels/ids.
#[derive(Debug, Clone)]
pub struct PaddedBatch {
    /// `[B, 45, L_max]`; padded cells are exactly zero.
    pub features: Tensor,
    pub mask: Mask,
    pub labels: Vec<Option<usize>>,
    pub ids: Vec<String>,
}

impl PaddedBatch {
    pub fn batch_size(&self) -> usize {
        self.features.dim(0)
    }
}

/// Zero-pads a group of proteins to their longest member.
pub fn pad_batch(proteins: &[&EncodedProtein]) -> PaddedBatch {
    let max_len = proteins.iter().map(|p| p.len()).max().unwrap_or(0);
    pad_batch_to(proteins, max_len)
}

/// Zero-pads a group of proteins to an explicit length, which must be at
/// least the longest member. Useful for checking that extra padding does
/// not change results.
pub fn pad_batch_to(proteins: &[&EncodedProtein], padded_len: usize) -> PaddedBatch {
    assert!(!proteins.is_empty(), "cannot pad an empty batch");
    let channels = proteins[0].features.dim(1);
    let lengths: Vec<usize> = proteins.iter().map(|p| p.len()).collect();
    assert!(
        lengths.iter().all(|&l| l <= padded_len),
        "padded length {padded_len} shorter than a batch member"
    );
    let batch = proteins.len();
    let mut features = Tensor::zeros(&[batch, channels, padded_len]);
    for (b, p) in proteins.iter().enumerate() {
        for l in 0..p.len() {
            let row = p.features.row2(l);
            for (c, &v) in row.iter().enumerate() {
                features.set3(b, c, l, v);
            }
        }
    }
    PaddedBatch {
        features,
        mask: Mask::from_lengths(&lengths, padded_len),
        labels: proteins.iter().map(|p| p.label).collect(),
        ids: proteins.iter().map(|p| p.id.clone()).collect(),
    }
}
