//! Profile (position-specific scoring matrix) reading and writing in the
//! standard ASCII layout: free-form header lines, then one row per residue
//! holding a 1-based index, the residue letter, and 20 integer log-odds
//! columns (anything after them is ignored), then free-form footer lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::tensor::Tensor;

use super::residue::canonical_residue;
use super::{io_err, EncodeError};

/// Residue order of the 20 log-odds columns in profile files (the
/// conventional PSSM column order, which differs from the one-hot alphabet
/// order).
pub const PROFILE_COLUMNS: &[u8; 20] = b"ARNDCQEGHILKMFPSTWYV";

/// Column of a residue letter within [`PROFILE_COLUMNS`].
pub fn profile_column(letter: u8) -> Option<usize> {
    PROFILE_COLUMNS.iter().position(|&c| c == letter)
}

/// Per-residue profile scores, `[L, 20]`, columns in [`PROFILE_COLUMNS`]
/// order, log-odds integers stored as reals.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    pub scores: Tensor,
}

impl ProfileMatrix {
    pub fn rows(&self) -> usize {
        self.scores.dim(0)
    }
}

/// True if the line looks like a profile data row: first token a positive
/// integer, second token a single letter.
fn is_data_row(fields: &[&str]) -> bool {
    fields.len() >= 2
        && fields[0].bytes().all(|b| b.is_ascii_digit())
        && !fields[0].is_empty()
        && fields[1].len() == 1
        && fields[1].as_bytes()[0].is_ascii_alphabetic()
}

/// Parses a profile file and cross-checks it against the sequence it
/// annotates. Residue letters are compared after the same canonical
/// substitution the FASTA parser applies, so a profile written for the raw
/// sequence still matches.
pub fn parse_pssm(path: &Path, expected_sequence: &str) -> Result<ProfileMatrix, EncodeError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let expected: &[u8] = expected_sequence.as_bytes();
    let mut rows: Vec<f64> = Vec::with_capacity(expected.len() * 20);
    let mut row_count = 0usize;

    for line in text.lines() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !is_data_row(&fields) {
            if row_count == 0 {
                continue; // header
            }
            break; // footer — data rows are contiguous
        }
        row_count += 1;
        if fields.len() < 22 {
            return Err(EncodeError::ProfileField {
                path: path.to_path_buf(),
                row: row_count,
                field: format!("only {} columns", fields.len()),
            });
        }
        let letter = fields[1].as_bytes()[0];
        if row_count <= expected.len() {
            let want = expected[row_count - 1];
            let got = canonical_residue(letter).map(|(c, _)| c).unwrap_or(letter);
            if got != want {
                return Err(EncodeError::ProfileResidue {
                    path: path.to_path_buf(),
                    row: row_count,
                    expected: want as char,
                    found: letter as char,
                });
            }
        }
        for field in &fields[2..22] {
            let value: i64 = field.parse().map_err(|_| EncodeError::ProfileField {
                path: path.to_path_buf(),
                row: row_count,
                field: (*field).to_string(),
            })?;
            rows.push(value as f64);
        }
    }

    if row_count != expected.len() {
        return Err(EncodeError::ProfileRowCount {
            path: path.to_path_buf(),
            expected: expected.len(),
            found: row_count,
        });
    }
    Ok(ProfileMatrix {
        scores: Tensor::from_vec(&[row_count, 20], rows),
    })
}

/// Writes a profile in the layout [`parse_pssm`] reads. Scores are emitted
/// as integers (values are rounded), so integer-valued matrices round-trip
/// exactly.
pub fn write_pssm(
    path: &Path,
    sequence: &str,
    profile: &ProfileMatrix,
) -> Result<(), EncodeError> {
    assert_eq!(
        profile.rows(),
        sequence.len(),
        "profile rows must match sequence length"
    );
    let mut out = String::new();
    out.push('\n');
    out.push_str("Last position-specific scoring matrix computed\n");
    out.push_str("          ");
    for &c in PROFILE_COLUMNS {
        let _ = write!(out, "{:>4}", c as char);
    }
    out.push('\n');
    for (i, residue) in sequence.bytes().enumerate() {
        let _ = write!(out, "{:>5} {}", i + 1, residue as char);
        for j in 0..20 {
            let _ = write!(out, "{:>4}", profile.scores.get2(i, j).round() as i64);
        }
        out.push('\n');
    }
    out.push('\n');
    fs::write(path, out).map_err(|e| io_err(path, e))
}
