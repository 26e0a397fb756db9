//! Per-residue annotation files: secondary structure and solvent
//! accessibility, one letter per residue.

use std::fs;
use std::path::Path;

use super::{io_err, EncodeError};

/// 3-class secondary structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsClass {
    Helix,
    Strand,
    Loop,
}

impl SsClass {
    pub fn letter(self) -> char {
        match self {
            SsClass::Helix => 'H',
            SsClass::Strand => 'E',
            SsClass::Loop => 'C',
        }
    }

    /// Offset of this class within the 3-column one-hot block.
    pub fn column(self) -> usize {
        match self {
            SsClass::Helix => 0,
            SsClass::Strand => 1,
            SsClass::Loop => 2,
        }
    }
}

/// 2-class solvent accessibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaClass {
    Exposed,
    Buried,
}

impl SaClass {
    pub fn letter(self) -> char {
        match self {
            SaClass::Exposed => 'e',
            SaClass::Buried => 'b',
        }
    }

    /// Offset of this class within the 2-column one-hot block.
    pub fn column(self) -> usize {
        match self {
            SaClass::Exposed => 0,
            SaClass::Buried => 1,
        }
    }
}

fn parse_letters<T, F>(
    path: &Path,
    expected_len: usize,
    classify: F,
) -> Result<Vec<T>, EncodeError>
where
    F: Fn(char) -> Option<T>,
{
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let letters: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if letters.len() != expected_len {
        return Err(EncodeError::AnnotationLength {
            path: path.to_path_buf(),
            expected: expected_len,
            found: letters.len(),
        });
    }
    letters
        .into_iter()
        .enumerate()
        .map(|(i, letter)| {
            classify(letter).ok_or(EncodeError::AnnotationLetter {
                path: path.to_path_buf(),
                position: i + 1,
                letter,
            })
        })
        .collect()
}

/// Reads a secondary-structure annotation: `expected_len` letters from
/// {H, E, C} (case-insensitive), whitespace ignored.
pub fn parse_ss(path: &Path, expected_len: usize) -> Result<Vec<SsClass>, EncodeError> {
    parse_letters(path, expected_len, |c| match c.to_ascii_uppercase() {
        'H' => Some(SsClass::Helix),
        'E' => Some(SsClass::Strand),
        'C' => Some(SsClass::Loop),
        _ => None,
    })
}

/// Reads a solvent-accessibility annotation: `expected_len` letters from
/// {e, b} (case-insensitive), whitespace ignored.
pub fn parse_sa(path: &Path, expected_len: usize) -> Result<Vec<SaClass>, EncodeError> {
    parse_letters(path, expected_len, |c| match c.to_ascii_lowercase() {
        'e' => Some(SaClass::Exposed),
        'b' => Some(SaClass::Buried),
        _ => None,
    })
}
