//! Input parsing and per-residue feature encoding.
//!
//! A protein enters the pipeline as a sequence plus optional per-residue
//! annotation blocks — a profile matrix of log-odds scores, a 3-class
//! secondary-structure string, and a 2-class solvent-accessibility string —
//! and leaves as an `[L, 45]` feature matrix:
//!
//! | columns | content                                  |
//! |---------|------------------------------------------|
//! | 0–19    | residue one-hot (alphabet order)         |
//! | 20–39   | profile scores (profile column order)    |
//! | 40–42   | secondary structure one-hot (H, E, C)    |
//! | 43–44   | solvent accessibility one-hot (e, b)     |
//!
//! Missing optional blocks are zero-filled and flagged in the record's
//! provenance rather than rejected. The module also generates labeled
//! synthetic corpora and reads/writes the on-disk dataset layout.

mod annot;
mod dataset;
mod fasta;
mod profile;
mod protein;
mod residue;
mod synthetic;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use annot::{parse_sa, parse_ss, SaClass, SsClass};
pub use dataset::{load_dataset, write_dataset, DatasetReport, LoadOptions, LoadedDataset};
pub use fasta::{parse_fasta, FastaParse, FastaRecord, Substitution};
pub use profile::{parse_pssm, profile_column, write_pssm, ProfileMatrix, PROFILE_COLUMNS};
pub use protein::{
    encode_protein, EncodedProtein, FeatureProvenance, CHANNELS, ONEHOT_RANGE, PROFILE_RANGE,
    SA_RANGE, SS_RANGE,
};
pub use residue::{canonical_residue, residue_index, synthetic_sa, synthetic_ss, ALPHABET};
pub use synthetic::{encode_synthetic_sequence, generate_synthetic, SyntheticSpec};

/// Everything that can go wrong while reading, parsing, or assembling
/// protein inputs. File-level variants carry the path and, where a specific
/// spot is to blame, a 1-based line number or residue position.
#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed header: {reason}")]
    MalformedHeader {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: unexpected character '{letter}' in sequence data")]
    SequenceCharacter {
        path: PathBuf,
        line: usize,
        letter: char,
    },
    #[error("{path}:{line}: record '{id}' has an empty sequence")]
    EmptySequence {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: duplicate record id '{id}'")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}: expected {expected} profile rows, found {found}")]
    ProfileRowCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: profile row {row}: residue '{found}' does not match sequence residue '{expected}'")]
    ProfileResidue {
        path: PathBuf,
        row: usize,
        expected: char,
        found: char,
    },
    #[error("{path}: profile row {row}: unreadable field '{field}'")]
    ProfileField {
        path: PathBuf,
        row: usize,
        field: String,
    },
    #[error("{path}: annotation has {found} classes for {expected} residues")]
    AnnotationLength {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: unknown annotation letter '{letter}' at residue {position}")]
    AnnotationLetter {
        path: PathBuf,
        position: usize,
        letter: char,
    },
    #[error("{path}:{line}: {reason}")]
    Labels {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("empty sequence for '{id}'")]
    Empty { id: String },
    #[error("protein '{id}': unknown residue '{letter}' at position {position}")]
    UnknownResidue {
        id: String,
        position: usize,
        letter: char,
    },
    #[error("protein '{id}': {block} block has {block_len} entries for {sequence_len} residues")]
    BlockLength {
        id: String,
        block: &'static str,
        sequence_len: usize,
        block_len: usize,
    },
    #[error("invalid synthetic corpus spec: {reason}")]
    InvalidSpec { reason: String },
}

pub(crate) fn io_err(path: &std::path::Path, source: io::Error) -> EncodeError {
    EncodeError::Io {
        path: path.to_path_buf(),
        source,
    }
}
