//! Labeled synthetic corpora for desk-scale training and testing.
//!
//! Each fold is defined by a distinct set of residue motifs. A member
//! protein is uniform random background with every motif implanted once at
//! a random non-overlapping position, optionally corrupted by substitution
//! noise. All 45 feature channels are exercised: the profile block carries
//! smoothed local residue counts, and secondary structure / accessibility
//! are derived deterministically from residue identity.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

use super::profile::{profile_column, ProfileMatrix};
use super::protein::{encode_protein, EncodedProtein};
use super::residue::{synthetic_sa, synthetic_ss, ALPHABET};
use super::EncodeError;

/// Recipe for a synthetic corpus. Lengths are inclusive bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_folds: usize,
    pub proteins_per_fold: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub motifs_per_fold: usize,
    pub motif_length: usize,
    /// Per-position probability of replacing the residue with a uniform
    /// random one after motif implantation.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_folds: 20,
            proteins_per_fold: 50,
            min_length: 40,
            max_length: 120,
            motifs_per_fold: 3,
            motif_length: 10,
            noise_rate: 0.02,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), EncodeError> {
        let invalid = |reason: String| Err(EncodeError::InvalidSpec { reason });
        if self.num_folds == 0
            || self.proteins_per_fold == 0
            || self.motifs_per_fold == 0
            || self.motif_length == 0
            || self.min_length == 0
        {
            return invalid("all counts must be positive".into());
        }
        if self.max_length < self.min_length {
            return invalid(format!(
                "length range [{}, {}] is empty",
                self.min_length, self.max_length
            ));
        }
        let span = self.motifs_per_fold * self.motif_length;
        if span > self.min_length {
            return invalid(format!(
                "{} motifs of length {} need {span} residues but the minimum length is {}",
                self.motifs_per_fold, self.motif_length, self.min_length
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return invalid(format!("noise rate {} outside [0, 1]", self.noise_rate));
        }
        Ok(())
    }
}

fn random_residue<R: Rng>(rng: &mut R) -> u8 {
    ALPHABET[rng.random_range(0..ALPHABET.len())]
}

/// Smoothed local residue counts: each position contributes a triangular
/// window (weights 1,2,4,2,1 over offsets −2..=2) to the profile column of
/// the residue found there.
fn count_profile(residues: &[u8]) -> ProfileMatrix {
    const WEIGHTS: [(isize, f64); 5] = [(-2, 1.0), (-1, 2.0), (0, 4.0), (1, 2.0), (2, 1.0)];
    let len = residues.len();
    let mut scores = Tensor::zeros(&[len, 20]);
    for j in 0..len {
        let row = scores.row2_mut(j);
        for (offset, weight) in WEIGHTS {
            let i = j as isize + offset;
            if i >= 0 && (i as usize) < len {
                let col = profile_column(residues[i as usize])
                    .expect("synthetic residues are canonical");
                row[col] += weight;
            }
        }
    }
    ProfileMatrix { scores }
}

/// Encodes a bare residue string with the synthetic annotation channels:
/// smoothed local residue counts in the profile block and residue-derived
/// secondary structure / accessibility classes.
pub fn encode_synthetic_sequence(
    id: &str,
    residues: &str,
    label: Option<usize>,
) -> Result<EncodedProtein, EncodeError> {
    let bytes = residues.as_bytes();
    for (i, &letter) in bytes.iter().enumerate() {
        if super::residue::residue_index(letter).is_none() {
            return Err(EncodeError::UnknownResidue {
                id: id.to_string(),
                position: i + 1,
                letter: letter as char,
            });
        }
    }
    if bytes.is_empty() {
        return Err(EncodeError::Empty { id: id.to_string() });
    }
    let profile = count_profile(bytes);
    let ss: Vec<_> = bytes.iter().map(|&r| synthetic_ss(r)).collect();
    let sa: Vec<_> = bytes.iter().map(|&r| synthetic_sa(r)).collect();
    encode_protein(id, residues, Some(&profile), Some(&ss), Some(&sa), label)
}

/// Generates the labeled corpus described by `spec`, deterministically from
/// its seed. Proteins are emitted fold by fold with ids `f<fold>p<index>`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<EncodedProtein>, EncodeError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Distinct motif sets: re-draw any motif string already claimed.
    let mut claimed: HashSet<Vec<u8>> = HashSet::new();
    let mut fold_motifs: Vec<Vec<Vec<u8>>> = Vec::with_capacity(spec.num_folds);
    for _ in 0..spec.num_folds {
        let mut motifs = Vec::with_capacity(spec.motifs_per_fold);
        for _ in 0..spec.motifs_per_fold {
            let motif = loop {
                let candidate: Vec<u8> =
                    (0..spec.motif_length).map(|_| random_residue(&mut rng)).collect();
                if claimed.insert(candidate.clone()) {
                    break candidate;
                }
            };
            motifs.push(motif);
        }
        fold_motifs.push(motifs);
    }

    let mut corpus = Vec::with_capacity(spec.num_folds * spec.proteins_per_fold);
    for (fold, motifs) in fold_motifs.iter().enumerate() {
        for index in 0..spec.proteins_per_fold {
            let len = rng.random_range(spec.min_length..=spec.max_length);
            let mut residues: Vec<u8> = (0..len).map(|_| random_residue(&mut rng)).collect();

            // Non-overlapping placement: split the slack uniformly into
            // gaps before/between/after the motifs.
            let slack = len - spec.motifs_per_fold * spec.motif_length;
            let mut cuts: Vec<usize> = (0..spec.motifs_per_fold)
                .map(|_| rng.random_range(0..=slack))
                .collect();
            cuts.sort_unstable();
            let mut position = 0usize;
            let mut previous_cut = 0usize;
            for (motif, &cut) in motifs.iter().zip(&cuts) {
                position += cut - previous_cut;
                residues[position..position + motif.len()].copy_from_slice(motif);
                position += motif.len();
                previous_cut = cut;
            }

            if spec.noise_rate > 0.0 {
                for r in residues.iter_mut() {
                    if rng.random::<f64>() < spec.noise_rate {
                        *r = random_residue(&mut rng);
                    }
                }
            }

            let sequence = String::from_utf8(residues).expect("alphabet is ASCII");
            let id = format!("f{fold:03}p{index:03}");
            corpus.push(encode_synthetic_sequence(&id, &sequence, Some(fold))?);
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            num_folds: 2,
            proteins_per_fold: 3,
            min_length: 30,
            max_length: 40,
            motifs_per_fold: 2,
            motif_length: 8,
            noise_rate: 0.0,
            seed: 11,
        }
    }

    #[test]
    fn corpus_has_expected_counts_and_labels() {
        let corpus = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(corpus.len(), 6);
        for (i, p) in corpus.iter().enumerate() {
            assert_eq!(p.label, Some(i / 3));
            assert!(p.len() >= 30 && p.len() <= 40);
            assert!(p.provenance.profile && p.provenance.ss && p.provenance.sa);
        }
    }

    #[test]
    fn same_seed_reproduces_the_corpus() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.residues, y.residues);
            assert_eq!(x.features.data(), y.features.data());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let mut spec = small_spec();
        spec.seed = 12;
        let b = generate_synthetic(&spec).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| x.residues != y.residues));
    }

    #[test]
    fn noiseless_members_contain_every_fold_motif() {
        // Recover each fold's motifs from its first member by construction
        // independence: with noise 0, any string common to all members at
        // motif length must include the implanted motifs. Directly assert
        // the generator's own invariant instead: regenerate and check that
        // every member of a fold contains the same 2 motifs found in all
        // other members.
        let corpus = generate_synthetic(&small_spec()).unwrap();
        for fold in 0..2 {
            let members: Vec<&str> = corpus
                .iter()
                .filter(|p| p.label == Some(fold))
                .map(|p| p.residues.as_str())
                .collect();
            // Candidate motifs: all length-8 substrings of the first member
            // that appear in every member.
            let first = members[0];
            let shared: Vec<&str> = (0..=first.len() - 8)
                .map(|i| &first[i..i + 8])
                .filter(|sub| members.iter().all(|m| m.contains(sub)))
                .collect();
            assert!(
                shared.len() >= 2,
                "fold {fold} members share only {} length-8 substrings",
                shared.len()
            );
        }
    }

    #[test]
    fn profile_block_is_populated() {
        let corpus = generate_synthetic(&small_spec()).unwrap();
        let p = &corpus[0];
        for i in 0..p.len() {
            let row = p.features.row2(i);
            let total: f64 = row[super::super::protein::PROFILE_RANGE].iter().sum();
            // Interior rows see the full triangular mass of 10 (1+2+4+2+1).
            assert!(total >= 7.0, "row {i} profile mass {total}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = small_spec();
        spec.min_length = 10; // 2 motifs × 8 = 16 > 10
        assert!(matches!(
            generate_synthetic(&spec),
            Err(EncodeError::InvalidSpec { .. })
        ));
        let mut spec = small_spec();
        spec.noise_rate = 1.5;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.max_length = spec.min_length - 1;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.num_folds = 0;
        assert!(spec.validate().is_err());
    }
}
