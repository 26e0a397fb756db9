//! The template database: fold features of known proteins, searchable by
//! divergence from a query.
//!
//! On disk the database is a little-endian binary (magic `DSFT`,
//! version 1): header of record count and feature dimension, an id table
//! (length-prefixed UTF-8), fold indices as `u64`, then all features as
//! `f32`. Values are widened to `f64` in memory; saving a loaded database
//! reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::metric::{distance, DistanceMetric};
use super::AnalyzeError;
use crate::encode::EncodedProtein;
use crate::model::{infer_corpus, predict_topk, ModelState, SFFeature};

const MAGIC: &[u8; 4] = b"DSFT";
const VERSION: u32 = 1;

/// One known protein: id, fold, and its fold-feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateRecord {
    pub id: String,
    pub fold: usize,
    pub feature: SFFeature,
}

/// An in-memory set of template records with a uniform feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateDb {
    records: Vec<TemplateRecord>,
    dim: usize,
}

impl TemplateDb {
    /// Wraps records, enforcing that every feature has the same dimension.
    pub fn new(records: Vec<TemplateRecord>) -> Result<Self, AnalyzeError> {
        let dim = records.first().map(|r| r.feature.dim()).unwrap_or(0);
        for r in &records {
            if r.feature.dim() != dim {
                return Err(AnalyzeError::MixedFeatureDims {
                    id: r.id.clone(),
                    expected: dim,
                    found: r.feature.dim(),
                });
            }
        }
        Ok(TemplateDb { records, dim })
    }

    /// Extracts fold features for a labeled corpus and stores them as
    /// templates.
    pub fn from_corpus(
        state: &ModelState,
        corpus: &[EncodedProtein],
        batch_capacity: usize,
    ) -> Result<Self, AnalyzeError> {
        for p in corpus {
            if p.label.is_none() {
                return Err(AnalyzeError::Unlabeled { id: p.id.clone() });
            }
        }
        let output = infer_corpus(state, corpus, batch_capacity.max(1))?;
        let records = corpus
            .iter()
            .zip(output.features)
            .map(|(p, feature)| TemplateRecord {
                id: p.id.clone(),
                fold: p.label.expect("checked above"),
                feature,
            })
            .collect();
        TemplateDb::new(records)
    }

    pub fn records(&self) -> &[TemplateRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Feature dimension shared by all records (0 when empty).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Folds having at least `min_members` records, unordered.
    pub fn folds_with_at_least(&self, min_members: usize) -> Vec<usize> {
        let mut counts: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        for r in &self.records {
            *counts.entry(r.fold).or_insert(0) += 1;
        }
        counts
            .into_iter()
            .filter(|&(_, n)| n >= min_members)
            .map(|(fold, _)| fold)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), AnalyzeError> {
        let io_err = |source| AnalyzeError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(io_err);
        write(MAGIC)?;
        write(&VERSION.to_le_bytes())?;
        write(&(self.records.len() as u64).to_le_bytes())?;
        write(&(self.dim as u64).to_le_bytes())?;
        for r in &self.records {
            write(&(r.id.len() as u32).to_le_bytes())?;
            write(r.id.as_bytes())?;
        }
        for r in &self.records {
            write(&(r.fold as u64).to_le_bytes())?;
        }
        for r in &self.records {
            for &v in &r.feature.values {
                write(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, AnalyzeError> {
        let io_err = |source| AnalyzeError::Io {
            path: path.to_path_buf(),
            source,
        };
        let corrupt = |reason: String| AnalyzeError::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::open(path).map_err(io_err)?;
        let mut r = BufReader::new(file);
        let mut read = |buf: &mut [u8], what: &str| {
            r.read_exact(buf).map_err(|e| {
                if e.kind() == std::io::ErrorKind::UnexpectedEof {
                    AnalyzeError::Corrupt {
                        path: path.to_path_buf(),
                        reason: format!("file truncated while reading {what}"),
                    }
                } else {
                    AnalyzeError::Io {
                        path: path.to_path_buf(),
                        source: e,
                    }
                }
            })
        };

        let mut magic = [0u8; 4];
        read(&mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(AnalyzeError::BadMagic {
                path: path.to_path_buf(),
            });
        }
        let mut word = [0u8; 4];
        read(&mut word, "version")?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(AnalyzeError::Version {
                path: path.to_path_buf(),
                found: version,
            });
        }
        let mut long = [0u8; 8];
        read(&mut long, "record count")?;
        let count = u64::from_le_bytes(long) as usize;
        read(&mut long, "feature dimension")?;
        let dim = u64::from_le_bytes(long) as usize;
        // Sizes implying more than ~4 GiB of features mean a corrupt
        // header, not a plausible database.
        if count.checked_mul(dim).map_or(true, |cells| cells > (1 << 30)) {
            return Err(corrupt(format!(
                "implausible header: {count} records × {dim} dimensions"
            )));
        }

        let mut ids = Vec::with_capacity(count);
        for i in 0..count {
            read(&mut word, "id length")?;
            let len = u32::from_le_bytes(word) as usize;
            if len > (1 << 16) {
                return Err(corrupt(format!("id {i} claims {len} bytes")));
            }
            let mut bytes = vec![0u8; len];
            read(&mut bytes, "id")?;
            let id = String::from_utf8(bytes)
                .map_err(|_| corrupt(format!("id {i} is not valid UTF-8")))?;
            ids.push(id);
        }
        let mut folds = Vec::with_capacity(count);
        for _ in 0..count {
            read(&mut long, "fold index")?;
            folds.push(u64::from_le_bytes(long) as usize);
        }
        let mut records = Vec::with_capacity(count);
        for (id, fold) in ids.into_iter().zip(folds) {
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                read(&mut word, "feature values")?;
                values.push(f32::from_le_bytes(word) as f64);
            }
            records.push(TemplateRecord {
                id,
                fold,
                feature: SFFeature { values },
            });
        }
        let mut trailing = [0u8; 1];
        match r.read(&mut trailing) {
            Ok(0) => {}
            Ok(_) => return Err(corrupt("trailing data after features".into())),
            Err(e) => return Err(io_err(e)),
        }
        TemplateDb::new(records)
    }

    /// Tab-separated export for inspection: `id`, `fold`, then the feature
    /// components.
    pub fn write_tsv(&self, path: &Path) -> Result<(), AnalyzeError> {
        let io_err = |source| AnalyzeError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "id\tfold\tfeature").map_err(io_err)?;
        for r in &self.records {
            let feature = r
                .feature
                .values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(w, "{}\t{}\t{}", r.id, r.fold, feature).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// One search hit: a template and its divergence from the query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedTemplate {
    pub id: String,
    pub fold: usize,
    pub score: f64,
}

/// Outcome of a template search.
#[derive(Debug, Clone, PartialEq)]
pub enum TemplateRanking {
    /// Best templates, ascending divergence, ties broken by id.
    Ranked(Vec<RankedTemplate>),
    /// No database record belongs to any of the query's predicted folds.
    NoTemplatesInPredictedFolds { predicted_folds: Vec<usize> },
}

/// Ranks database templates against `target`: its `top_folds` most probable
/// folds define the candidate pool, which is ordered by ascending symmetric
/// divergence between fold features; the best `top_templates` are returned.
/// The result is independent of database record order (up to the id
/// tie-break).
pub fn rank_templates(
    state: &ModelState,
    target: &EncodedProtein,
    db: &TemplateDb,
    top_folds: usize,
    top_templates: usize,
) -> Result<TemplateRanking, AnalyzeError> {
    if db.is_empty() {
        return Err(AnalyzeError::EmptyTemplateDb);
    }
    let folds = top_folds.min(state.config.num_folds).max(1);
    let predicted: Vec<usize> = predict_topk(state, target, folds)?
        .into_iter()
        .map(|(fold, _)| fold)
        .collect();
    let query = {
        let batch = crate::batch::pad_batch(&[target]);
        let output = crate::model::infer(state, &batch)?;
        output.features.into_iter().next().expect("one batch member")
    };

    let mut pool = Vec::new();
    for r in db.records() {
        if predicted.contains(&r.fold) {
            let score = distance(
                DistanceMetric::SymmetricDivergence,
                &query.values,
                &r.feature.values,
            )?;
            pool.push(RankedTemplate {
                id: r.id.clone(),
                fold: r.fold,
                score,
            });
        }
    }
    if pool.is_empty() {
        return Ok(TemplateRanking::NoTemplatesInPredictedFolds {
            predicted_folds: predicted,
        });
    }
    pool.sort_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .expect("divergences are finite")
            .then_with(|| a.id.cmp(&b.id))
    });
    pool.truncate(top_templates);
    Ok(TemplateRanking::Ranked(pool))
}
