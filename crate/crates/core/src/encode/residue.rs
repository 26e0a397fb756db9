//! The residue alphabet, canonical substitutions for ambiguity codes, and
//! the deterministic class maps used by the synthetic corpus generator.

use super::annot::{SaClass, SsClass};

/// The 20 standard amino acids, in the order used by the one-hot block.
pub const ALPHABET: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

/// Index of a canonical residue letter within [`ALPHABET`], or `None` for
/// anything else (including ambiguity codes — canonicalize first).
pub fn residue_index(letter: u8) -> Option<usize> {
    ALPHABET.iter().position(|&a| a == letter)
}

/// Maps a raw letter to its canonical residue. Standard letters map to
/// themselves; ambiguity and rare codes substitute a fixed stand-in
/// (B→D, Z→E, X→A, U→C, O→K, J→L). Returns the canonical letter and
/// whether a substitution happened, or `None` for letters with no reading.
pub fn canonical_residue(letter: u8) -> Option<(u8, bool)> {
    let upper = letter.to_ascii_uppercase();
    if residue_index(upper).is_some() {
        return Some((upper, false));
    }
    let replacement = match upper {
        b'B' => b'D',
        b'Z' => b'E',
        b'X' => b'A',
        b'U' => b'C',
        b'O' => b'K',
        b'J' => b'L',
        _ => return None,
    };
    Some((replacement, true))
}

/// Deterministic secondary-structure class for synthetic data, keyed on
/// residue identity (helix formers, strand formers, the rest loop).
pub fn synthetic_ss(residue: u8) -> SsClass {
    match residue {
        b'A' | b'E' | b'L' | b'M' | b'Q' | b'K' | b'R' | b'H' => SsClass::Helix,
        b'V' | b'I' | b'Y' | b'C' | b'W' | b'F' | b'T' => SsClass::Strand,
        _ => SsClass::Loop,
    }
}

/// Deterministic solvent-accessibility class for synthetic data:
/// hydrophobic residues buried, the rest exposed.
pub fn synthetic_sa(residue: u8) -> SaClass {
    match residue {
        b'A' | b'C' | b'F' | b'I' | b'L' | b'M' | b'V' | b'W' => SaClass::Buried,
        _ => SaClass::Exposed,
    }
}
