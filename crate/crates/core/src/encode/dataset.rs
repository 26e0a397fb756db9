//! On-disk dataset layout:
//!
//! ```text
//! dataset/
//!   sequences.fasta      required
//!   labels.tsv           optional; header line `id<TAB>fold_index`
//!   profiles/<id>.pssm   optional per protein
//!   ss/<id>.ss           optional per protein
//!   sa/<id>.sa           optional per protein
//! ```
//!
//! Present files must parse — malformed content is an error, never silently
//! skipped. Absent optional files zero-fill their feature block and are
//! counted in the load report.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::tensor::Tensor;

use super::annot::{parse_sa, parse_ss, SaClass, SsClass};
use super::fasta::{parse_fasta, Substitution};
use super::profile::{parse_pssm, write_pssm, ProfileMatrix};
use super::protein::{
    encode_protein, EncodedProtein, PROFILE_RANGE, SA_RANGE, SS_RANGE,
};
use super::{io_err, EncodeError};

/// Options for [`load_dataset`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Standardize each profile column to zero mean / unit variance over
    /// the residues of this corpus that actually have profiles. Off by
    /// default (raw log-odds scores are used as-is). Runs that must agree
    /// on features — training and later prediction — must agree on this
    /// flag and use commensurate corpora.
    pub standardize_profile: bool,
}

/// What [`load_dataset`] found besides the proteins themselves.
#[derive(Debug, Clone, Default)]
pub struct DatasetReport {
    pub substitutions: Vec<Substitution>,
    pub missing_profile: usize,
    pub missing_ss: usize,
    pub missing_sa: usize,
    pub labeled: bool,
}

/// A loaded corpus plus its report.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub proteins: Vec<EncodedProtein>,
    pub report: DatasetReport,
}

fn parse_labels(path: &Path) -> Result<HashMap<String, usize>, EncodeError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let labels_err = |line: usize, reason: String| EncodeError::Labels {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == "id\tfold_index" => {}
        Some((_, header)) => {
            return Err(labels_err(
                1,
                format!("expected header 'id\\tfold_index', found '{}'", header.trim_end()),
            ))
        }
        None => return Err(labels_err(1, "empty labels file".into())),
    }
    let mut labels = HashMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or("").trim();
        let value = fields.next().map(str::trim);
        if id.is_empty() || value.is_none() || fields.next().is_some() {
            return Err(labels_err(line_no, "expected exactly 'id<TAB>fold_index'".into()));
        }
        let fold: usize = value
            .unwrap()
            .parse()
            .map_err(|_| labels_err(line_no, format!("fold index '{}' is not a nonnegative integer", value.unwrap())))?;
        if labels.insert(id.to_string(), fold).is_some() {
            return Err(labels_err(line_no, format!("duplicate label for '{id}'")));
        }
    }
    Ok(labels)
}

/// Loads a dataset directory into encoded proteins, in FASTA order.
///
/// When `labels.tsv` is present it must cover exactly the sequence ids;
/// when absent the corpus is unlabeled. Per-protein profile/ss/sa files are
/// used when present and zero-filled (and counted) when not.
pub fn load_dataset(dir: &Path, options: LoadOptions) -> Result<LoadedDataset, EncodeError> {
    let fasta = parse_fasta(&dir.join("sequences.fasta"))?;

    let labels_path = dir.join("labels.tsv");
    let labels = if labels_path.exists() {
        let map = parse_labels(&labels_path)?;
        for id in map.keys() {
            if !fasta.records.iter().any(|r| &r.id == id) {
                return Err(EncodeError::Labels {
                    path: labels_path.clone(),
                    line: 0,
                    reason: format!("label for unknown sequence id '{id}'"),
                });
            }
        }
        for record in &fasta.records {
            if !map.contains_key(&record.id) {
                return Err(EncodeError::Labels {
                    path: labels_path.clone(),
                    line: 0,
                    reason: format!("no label for sequence '{}'", record.id),
                });
            }
        }
        Some(map)
    } else {
        None
    };

    let mut report = DatasetReport {
        substitutions: fasta.substitutions,
        labeled: labels.is_some(),
        ..DatasetReport::default()
    };

    let mut proteins = Vec::with_capacity(fasta.records.len());
    for record in &fasta.records {
        let profile_path = dir.join("profiles").join(format!("{}.pssm", record.id));
        let profile = if profile_path.exists() {
            Some(parse_pssm(&profile_path, &record.residues)?)
        } else {
            report.missing_profile += 1;
            None
        };
        let ss_path = dir.join("ss").join(format!("{}.ss", record.id));
        let ss = if ss_path.exists() {
            Some(parse_ss(&ss_path, record.residues.len())?)
        } else {
            report.missing_ss += 1;
            None
        };
        let sa_path = dir.join("sa").join(format!("{}.sa", record.id));
        let sa = if sa_path.exists() {
            Some(parse_sa(&sa_path, record.residues.len())?)
        } else {
            report.missing_sa += 1;
            None
        };
        let label = labels.as_ref().map(|m| m[&record.id]);
        proteins.push(encode_protein(
            &record.id,
            &record.residues,
            profile.as_ref(),
            ss.as_deref(),
            sa.as_deref(),
            label,
        )?);
    }

    if options.standardize_profile {
        standardize_profiles(&mut proteins);
    }
    Ok(LoadedDataset { proteins, report })
}

/// Z-scores each profile column over all residues of proteins that carry a
/// real profile block. Columns with zero variance are centered only.
fn standardize_profiles(proteins: &mut [EncodedProtein]) {
    let width = PROFILE_RANGE.len();
    let mut sum = vec![0.0; width];
    let mut sq = vec![0.0; width];
    let mut count = 0usize;
    for p in proteins.iter().filter(|p| p.provenance.profile) {
        for i in 0..p.len() {
            let row = &p.features.row2(i)[PROFILE_RANGE];
            for (j, &v) in row.iter().enumerate() {
                sum[j] += v;
                sq[j] += v * v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return;
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std: Vec<f64> = sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| (s / n - m * m).max(0.0).sqrt())
        .collect();
    for p in proteins.iter_mut().filter(|p| p.provenance.profile) {
        for i in 0..p.features.dim(0) {
            let row = &mut p.features.row2_mut(i)[PROFILE_RANGE];
            for (j, v) in row.iter_mut().enumerate() {
                *v -= mean[j];
                if std[j] > 1e-12 {
                    *v /= std[j];
                }
            }
        }
    }
}

fn onehot_class<T: Copy>(row: &[f64], classes: &[T]) -> Option<T> {
    row.iter()
        .position(|&v| v == 1.0)
        .and_then(|i| classes.get(i).copied())
}

/// Writes a corpus in the dataset layout [`load_dataset`] reads. Feature
/// blocks are reconstructed from the encoded matrices; blocks whose
/// provenance flag is false are not written. The corpus must be uniformly
/// labeled or uniformly unlabeled.
pub fn write_dataset(dir: &Path, proteins: &[EncodedProtein]) -> Result<(), EncodeError> {
    let labeled = proteins.iter().filter(|p| p.label.is_some()).count();
    assert!(
        labeled == 0 || labeled == proteins.len(),
        "write_dataset requires a uniformly labeled corpus"
    );

    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut fasta = String::new();
    for p in proteins {
        let _ = writeln!(fasta, ">{}", p.id);
        for chunk in p.residues.as_bytes().chunks(60) {
            let _ = writeln!(fasta, "{}", std::str::from_utf8(chunk).unwrap());
        }
    }
    let fasta_path = dir.join("sequences.fasta");
    fs::write(&fasta_path, fasta).map_err(|e| io_err(&fasta_path, e))?;

    if labeled > 0 {
        let mut tsv = String::from("id\tfold_index\n");
        for p in proteins {
            let _ = writeln!(tsv, "{}\t{}", p.id, p.label.unwrap());
        }
        let tsv_path = dir.join("labels.tsv");
        fs::write(&tsv_path, tsv).map_err(|e| io_err(&tsv_path, e))?;
    }

    for sub in ["profiles", "ss", "sa"] {
        let path = dir.join(sub);
        fs::create_dir_all(&path).map_err(|e| io_err(&path, e))?;
    }
    for p in proteins {
        let len = p.len();
        if p.provenance.profile {
            let mut scores = Tensor::zeros(&[len, 20]);
            for i in 0..len {
                scores
                    .row2_mut(i)
                    .copy_from_slice(&p.features.row2(i)[PROFILE_RANGE]);
            }
            write_pssm(
                &dir.join("profiles").join(format!("{}.pssm", p.id)),
                &p.residues,
                &ProfileMatrix { scores },
            )?;
        }
        if p.provenance.ss {
            let text: String = (0..len)
                .map(|i| {
                    onehot_class(
                        &p.features.row2(i)[SS_RANGE],
                        &[SsClass::Helix, SsClass::Strand, SsClass::Loop],
                    )
                    .expect("ss provenance implies a one-hot block")
                    .letter()
                })
                .collect();
            let path = dir.join("ss").join(format!("{}.ss", p.id));
            fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        }
        if p.provenance.sa {
            let text: String = (0..len)
                .map(|i| {
                    onehot_class(
                        &p.features.row2(i)[SA_RANGE],
                        &[SaClass::Exposed, SaClass::Buried],
                    )
                    .expect("sa provenance implies a one-hot block")
                    .letter()
                })
                .collect();
            let path = dir.join("sa").join(format!("{}.sa", p.id));
            fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::synthetic::{generate_synthetic, SyntheticSpec};

    fn tiny_corpus() -> Vec<EncodedProtein> {
        generate_synthetic(&SyntheticSpec {
            num_folds: 2,
            proteins_per_fold: 2,
            min_length: 25,
            max_length: 32,
            motifs_per_fold: 2,
            motif_length: 6,
            noise_rate: 0.0,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn write_then_load_reproduces_features_exactly() {
        let corpus = tiny_corpus();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &corpus).unwrap();
        let loaded = load_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(loaded.proteins.len(), corpus.len());
        assert!(loaded.report.labeled);
        assert_eq!(loaded.report.missing_profile, 0);
        for (a, b) in corpus.iter().zip(&loaded.proteins) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.residues, b.residues);
            assert_eq!(a.label, b.label);
            assert_eq!(a.features.data(), b.features.data(), "protein {}", a.id);
        }
    }

    #[test]
    fn absent_labels_file_loads_unlabeled() {
        let corpus = tiny_corpus();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &corpus).unwrap();
        fs::remove_file(dir.path().join("labels.tsv")).unwrap();
        let loaded = load_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert!(!loaded.report.labeled);
        assert!(loaded.proteins.iter().all(|p| p.label.is_none()));
    }

    #[test]
    fn missing_optional_files_zero_fill_and_count() {
        let corpus = tiny_corpus();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &corpus).unwrap();
        let victim = &corpus[0].id;
        fs::remove_file(dir.path().join("profiles").join(format!("{victim}.pssm"))).unwrap();
        fs::remove_file(dir.path().join("ss").join(format!("{victim}.ss"))).unwrap();
        let loaded = load_dataset(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(loaded.report.missing_profile, 1);
        assert_eq!(loaded.report.missing_ss, 1);
        assert_eq!(loaded.report.missing_sa, 0);
        let p = &loaded.proteins[0];
        assert!(!p.provenance.profile && !p.provenance.ss && p.provenance.sa);
        for i in 0..p.len() {
            assert!(p.features.row2(i)[PROFILE_RANGE].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn bad_label_header_rejected() {
        let corpus = tiny_corpus();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &corpus).unwrap();
        fs::write(dir.path().join("labels.tsv"), "protein\tfold\nf000p000\t0\n").unwrap();
        let err = load_dataset(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, EncodeError::Labels { line: 1, .. }));
    }

    #[test]
    fn label_for_unknown_sequence_rejected() {
        let corpus = tiny_corpus();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &corpus).unwrap();
        let mut tsv = fs::read_to_string(dir.path().join("labels.tsv")).unwrap();
        tsv.push_str("ghost\t0\n");
        fs::write(dir.path().join("labels.tsv"), tsv).unwrap();
        let err = load_dataset(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, EncodeError::Labels { .. }));
    }

    #[test]
    fn unlabeled_sequence_rejected_when_labels_present() {
        let corpus = tiny_corpus();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &corpus).unwrap();
        let tsv: String = fs::read_to_string(dir.path().join("labels.tsv"))
            .unwrap()
            .lines()
            .take(3) // header + 2 of 4 proteins
            .map(|l| format!("{l}\n"))
            .collect();
        fs::write(dir.path().join("labels.tsv"), tsv).unwrap();
        let err = load_dataset(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, EncodeError::Labels { .. }));
    }

    #[test]
    fn non_integer_fold_rejected_with_line() {
        let corpus = tiny_corpus();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &corpus).unwrap();
        let mut tsv = String::from("id\tfold_index\n");
        tsv.push_str("f000p000\tzero\n");
        fs::write(dir.path().join("labels.tsv"), tsv).unwrap();
        let err = load_dataset(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, EncodeError::Labels { line: 2, .. }));
    }

    #[test]
    fn standardization_normalizes_profile_columns() {
        let corpus = tiny_corpus();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &corpus).unwrap();
        let loaded = load_dataset(
            dir.path(),
            LoadOptions { standardize_profile: true },
        )
        .unwrap();
        let mut count = 0usize;
        let mut sum = vec![0.0; 20];
        let mut sq = vec![0.0; 20];
        for p in &loaded.proteins {
            for i in 0..p.len() {
                for (j, &v) in p.features.row2(i)[PROFILE_RANGE].iter().enumerate() {
                    sum[j] += v;
                    sq[j] += v * v;
                }
                count += 1;
            }
        }
        let n = count as f64;
        for j in 0..20 {
            let mean = sum[j] / n;
            let var = sq[j] / n - mean * mean;
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6 || var.abs() < 1e-12, "column {j} var {var}");
        }
    }
}
