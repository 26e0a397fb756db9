//! Assembly of the per-residue feature matrix.

use std::ops::Range;

use crate::tensor::Tensor;

use super::annot::{SaClass, SsClass};
use super::profile::ProfileMatrix;
use super::residue::residue_index;
use super::EncodeError;

/// Feature channels per residue.
pub const CHANNELS: usize = 45;
/// Residue one-hot block.
pub const ONEHOT_RANGE: Range<usize> = 0..20;
/// Profile score block.
pub const PROFILE_RANGE: Range<usize> = 20..40;
/// Secondary-structure one-hot block.
pub const SS_RANGE: Range<usize> = 40..43;
/// Solvent-accessibility one-hot block.
pub const SA_RANGE: Range<usize> = 43..45;

/// Which optional feature blocks were actually supplied (false means the
/// block is zero-filled).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FeatureProvenance {
    pub profile: bool,
    pub ss: bool,
    pub sa: bool,
}

/// A protein ready for the network: id, canonical residue string, the
/// `[L, 45]` feature matrix, and an optional fold label.
#[derive(Debug, Clone)]
pub struct EncodedProtein {
    pub id: String,
    pub residues: String,
    /// `[L, 45]`
    pub features: Tensor,
    pub label: Option<usize>,
    pub provenance: FeatureProvenance,
}

impl EncodedProtein {
    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

/// Builds the `[L, 45]` feature matrix for one protein. The residue one-hot
/// block is always present; profile, secondary-structure, and accessibility
/// blocks are filled when supplied and left zero (with a provenance flag)
/// when not.
pub fn encode_protein(
    id: &str,
    residues: &str,
    profile: Option<&ProfileMatrix>,
    ss: Option<&[SsClass]>,
    sa: Option<&[SaClass]>,
    label: Option<usize>,
) -> Result<EncodedProtein, EncodeError> {
    let len = residues.len();
    if len == 0 {
        return Err(EncodeError::Empty { id: id.to_string() });
    }
    let block_len = |block: &'static str, found: usize| EncodeError::BlockLength {
        id: id.to_string(),
        block,
        sequence_len: len,
        block_len: found,
    };
    if let Some(p) = profile {
        if p.rows() != len {
            return Err(block_len("profile", p.rows()));
        }
    }
    if let Some(s) = ss {
        if s.len() != len {
            return Err(block_len("secondary-structure", s.len()));
        }
    }
    if let Some(s) = sa {
        if s.len() != len {
            return Err(block_len("accessibility", s.len()));
        }
    }

    let mut features = Tensor::zeros(&[len, CHANNELS]);
    for (i, letter) in residues.bytes().enumerate() {
        let row = features.row2_mut(i);
        let slot = residue_index(letter).ok_or(EncodeError::UnknownResidue {
            id: id.to_string(),
            position: i + 1,
            letter: letter as char,
        })?;
        row[ONEHOT_RANGE.start + slot] = 1.0;
        if let Some(p) = profile {
            row[PROFILE_RANGE].copy_from_slice(p.scores.row2(i));
        }
        if let Some(s) = ss {
            row[SS_RANGE.start + s[i].column()] = 1.0;
        }
        if let Some(s) = sa {
            row[SA_RANGE.start + s[i].column()] = 1.0;
        }
    }
    Ok(EncodedProtein {
        id: id.to_string(),
        residues: residues.to_string(),
        features,
        label,
        provenance: FeatureProvenance {
            profile: profile.is_some(),
            ss: ss.is_some(),
            sa: sa.is_some(),
        },
    })
}
