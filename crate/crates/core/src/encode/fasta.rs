//! FASTA parsing with canonical residue substitution.

use std::fs;
use std::path::Path;

use super::residue::canonical_residue;
use super::{io_err, EncodeError};

/// One sequence record, already canonicalized to the 20-letter alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastaRecord {
    pub id: String,
    pub residues: String,
}

/// One ambiguity-code substitution applied during parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    pub id: String,
    /// 1-based residue position within the record.
    pub position: usize,
    pub from: char,
    pub to: char,
}

/// Result of parsing a FASTA file: the records plus a report of every
/// non-standard letter that was substituted.
#[derive(Debug, Clone)]
pub struct FastaParse {
    pub records: Vec<FastaRecord>,
    pub substitutions: Vec<Substitution>,
}

/// Parses a FASTA file. Headers are `>` followed by an id (first
/// whitespace-separated token); sequences may span lines and are uppercased;
/// ambiguity codes are substituted per [`canonical_residue`] and reported.
///
/// Rejected with the offending line number: sequence data before the first
/// header, empty ids, empty sequences, duplicate ids, and letters with no
/// canonical reading.
pub fn parse_fasta(path: &Path) -> Result<FastaParse, EncodeError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut records: Vec<FastaRecord> = Vec::new();
    let mut substitutions = Vec::new();
    // (id, residues, header line) of the record being accumulated
    let mut current: Option<(String, String, usize)> = None;

    let finish = |current: &mut Option<(String, String, usize)>,
                  records: &mut Vec<FastaRecord>|
     -> Result<(), EncodeError> {
        if let Some((id, residues, header_line)) = current.take() {
            if residues.is_empty() {
                return Err(EncodeError::EmptySequence {
                    path: path.to_path_buf(),
                    line: header_line,
                    id,
                });
            }
            records.push(FastaRecord { id, residues });
        }
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('>') {
            finish(&mut current, &mut records)?;
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            if id.is_empty() {
                return Err(EncodeError::MalformedHeader {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: "header has no id".into(),
                });
            }
            if records.iter().any(|r| r.id == id) {
                return Err(EncodeError::DuplicateId {
                    path: path.to_path_buf(),
                    line: line_no,
                    id,
                });
            }
            current = Some((id, String::new(), line_no));
        } else {
            let Some((id, residues, _)) = current.as_mut() else {
                return Err(EncodeError::MalformedHeader {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: "sequence data before the first '>' header".into(),
                });
            };
            for ch in trimmed.chars() {
                if ch.is_whitespace() {
                    continue;
                }
                if !ch.is_ascii() {
                    return Err(EncodeError::SequenceCharacter {
                        path: path.to_path_buf(),
                        line: line_no,
                        letter: ch,
                    });
                }
                match canonical_residue(ch as u8) {
                    Some((canonical, substituted)) => {
                        residues.push(canonical as char);
                        if substituted {
                            substitutions.push(Substitution {
                                id: id.clone(),
                                position: residues.len(),
                                from: ch.to_ascii_uppercase(),
                                to: canonical as char,
                            });
                        }
                    }
                    None => {
                        return Err(EncodeError::SequenceCharacter {
                            path: path.to_path_buf(),
                            line: line_no,
                            letter: ch,
                        });
                    }
                }
            }
        }
    }
    finish(&mut current, &mut records)?;
    Ok(FastaParse {
        records,
        substitutions,
    })
}
