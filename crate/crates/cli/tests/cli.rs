//! End-to-end tests of the `foldnet` binary: exit codes, help coverage,
//! artifact layout, and byte-identical reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_foldnet")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(output: &Output, expected: i32) {
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stderr was: {stderr}"
    );
}

/// A desk-scale configuration so the pipeline finishes in seconds.
fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{
  "seed": 7,
  "model": {
    "window_sizes": [2, 3],
    "filters_per_layer": 2,
    "conv_depth": 1,
    "kmax": 2,
    "hidden_units": 4,
    "num_folds": 4,
    "dropout_rate": 0.0
  },
  "train": {
    "bin_size": 25,
    "total_epochs": 2,
    "epochs_per_bin_visit": 1,
    "batch_capacity": 8,
    "learning_rate": 0.05,
    "momentum": 0.5
  },
  "synth": {
    "num_folds": 4,
    "proteins_per_fold": 6,
    "min_length": 25,
    "max_length": 35,
    "motifs_per_fold": 2,
    "motif_length": 6,
    "noise_rate": 0.02,
    "seed": 1
  },
  "validation_fraction": 0.2,
  "topk": 3,
  "trials": 3,
  "folds_per_trial": 2,
  "max_proteins_per_trial": 12,
  "variants": {"repeats_per_kind": 5, "max_indel_total": 5},
  "controls": {"count": 8, "min_length": 25, "max_length": 35},
  "truncation_step": 5
}
"#,
    )
    .unwrap();
    path
}

#[test]
fn help_exists_for_every_subcommand_and_lists_shared_flags() {
    let top = run(&["--help"]);
    assert_code(&top, 0);
    let text = String::from_utf8_lossy(&top.stdout).to_string();
    for sub in [
        "encode", "train", "eval", "predict", "extract", "cluster", "rank", "perturb", "synth",
    ] {
        assert!(text.contains(sub), "top-level help misses {sub}");
        let help = run(&[sub, "--help"]);
        assert_code(&help, 0);
        let sub_text = String::from_utf8_lossy(&help.stdout).to_string();
        for flag in ["--config", "--seed", "--out", "--checkpoint", "--topk", "--metric"] {
            assert!(sub_text.contains(flag), "{sub} --help misses {flag}");
        }
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_code(&run(&["frobnicate"]), 1);
    assert_code(&run(&["synth", "--no-such-flag"]), 1);
    // Required --out missing.
    assert_code(&run(&["synth"]), 1);
    // predict needs exactly one input source.
    let dir = TempDir::new().unwrap();
    let ckpt = dir.path().join("absent.ckpt");
    let out = run(&["predict", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_code(&out, 1);
}

#[test]
fn missing_dataset_directory_exits_2_with_the_path() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let output = run(&[
        "train",
        "--data",
        "/no/such/dataset",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_code(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("/no/such/dataset"), "stderr: {stderr}");
}

#[test]
fn malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"no_such_field": 1}"#).unwrap();
    let output = run(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_code(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no_such_field"), "stderr: {stderr}");
}

#[test]
fn pipeline_end_to_end() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let config = config.to_str().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    // synth
    assert_code(&run(&["synth", "--config", config, "--out", &path("s")]), 0);
    let dataset = path("s/dataset");
    assert!(Path::new(&path("s/dataset/sequences.fasta")).is_file());
    assert!(Path::new(&path("s/manifest.json")).is_file());
    let manifest = fs::read_to_string(path("s/manifest.json")).unwrap();
    assert!(manifest.contains("\"config_sha256\""));
    assert!(manifest.contains("\"seed\": 7"));

    // encode: normalized copy + report
    assert_code(
        &run(&["encode", "--config", config, "--data", &dataset, "--out", &path("n")]),
        0,
    );
    let report = fs::read_to_string(path("n/report.json")).unwrap();
    assert!(report.contains("\"proteins\": 24"));
    assert!(report.contains("\"labeled\": true"));

    // train
    assert_code(
        &run(&["train", "--config", config, "--data", &dataset, "--out", &path("t")]),
        0,
    );
    let ckpt = path("t/model.ckpt");
    assert!(Path::new(&ckpt).is_file());
    let log = fs::read_to_string(path("t/train_log.jsonl")).unwrap();
    assert!(log.lines().count() >= 2);
    assert!(log.contains("\"record\":\"pass\""));

    // eval
    assert_code(
        &run(&[
            "eval", "--config", config, "--data", &dataset, "--checkpoint", &ckpt, "--out",
            &path("e"),
        ]),
        0,
    );
    let accuracy = fs::read_to_string(path("e/accuracy.tsv")).unwrap();
    assert!(accuracy.starts_with("k\tcorrect\ttotal\taccuracy\n"));
    let groups = fs::read_to_string(path("e/groups.tsv")).unwrap();
    for class in ["small", "medium", "large"] {
        assert!(groups.contains(class), "groups.tsv misses {class}");
    }

    // predict: top-3 rows, probabilities descending and summing ≤ 1
    let predict = run(&[
        "predict",
        "--config",
        config,
        "--checkpoint",
        &ckpt,
        "--sequence",
        "ACDEFGHIKLMNPQRSTVWYACDEF",
    ]);
    assert_code(&predict, 0);
    let stdout = String::from_utf8_lossy(&predict.stdout).to_string();
    let probabilities: Vec<f64> = stdout
        .lines()
        .map(|line| line.rsplit('\t').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(probabilities.len(), 3);
    assert!(probabilities.windows(2).all(|w| w[0] >= w[1]));
    let total: f64 = probabilities.iter().sum();
    assert!(total > 0.0 && total <= 1.0 + 1e-12, "sum {total}");

    // extract
    assert_code(
        &run(&[
            "extract", "--config", config, "--data", &dataset, "--checkpoint", &ckpt, "--out",
            &path("x"),
        ]),
        0,
    );
    let templates = path("x/templates.db");
    assert!(Path::new(&path("x/features.tsv")).is_file());

    // cluster, with the metric overridden by flag
    assert_code(
        &run(&[
            "cluster",
            "--config",
            config,
            "--templates",
            &templates,
            "--out",
            &path("c"),
            "--metric",
            "corr",
        ]),
        0,
    );
    let clustering = fs::read_to_string(path("c/clustering.tsv")).unwrap();
    assert!(clustering.starts_with("# metric\tcorr\n"));
    assert!(clustering.contains("# mean_accuracy\t"));
    assert_eq!(clustering.lines().filter(|l| !l.starts_with('#')).count(), 4);

    // rank: the training sequences themselves must retrieve themselves
    let fasta = fs::read_to_string(path("s/dataset/sequences.fasta")).unwrap();
    let first_two: Vec<&str> = fasta.lines().take(4).collect();
    fs::write(path("queries.fasta"), first_two.join("\n")).unwrap();
    assert_code(
        &run(&[
            "rank",
            "--config",
            config,
            "--checkpoint",
            &ckpt,
            "--templates",
            &templates,
            "--fasta",
            &path("queries.fasta"),
            "--out",
            &path("r"),
        ]),
        0,
    );
    let ranking = fs::read_to_string(path("r/ranking.tsv")).unwrap();
    assert!(ranking.starts_with("query\trank\ttemplate\tfold\tscore\n"));
    assert!(ranking.lines().count() > 1);

    // perturb
    assert_code(
        &run(&[
            "perturb", "--config", config, "--data", &dataset, "--checkpoint", &ckpt, "--out",
            &path("p"),
        ]),
        0,
    );
    for file in ["p/divergence.tsv", "p/truncation.tsv", "p/summary.json"] {
        assert!(Path::new(&path(file)).is_file(), "missing {file}");
    }
    let summary = fs::read_to_string(path("p/summary.json")).unwrap();
    assert!(summary.contains("\"p_value\""));
    assert!(summary.contains("\"wild_type\": \"f000p000\""));

    // Reruns are byte-identical apart from the manifest timestamp.
    assert_code(
        &run(&[
            "perturb", "--config", config, "--data", &dataset, "--checkpoint", &ckpt, "--out",
            &path("p2"),
        ]),
        0,
    );
    for file in ["divergence.tsv", "truncation.tsv", "summary.json", "config.json"] {
        let a = fs::read(path(&format!("p/{file}"))).unwrap();
        let b = fs::read(path(&format!("p2/{file}"))).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
    }
}

#[test]
fn seed_flag_overrides_the_config_file() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let config = config.to_str().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    assert_code(&run(&["synth", "--config", config, "--out", &path("a")]), 0);
    assert_code(
        &run(&["synth", "--config", config, "--out", &path("b"), "--seed", "99"]),
        0,
    );
    assert_code(
        &run(&["synth", "--config", config, "--out", &path("c"), "--seed", "99"]),
        0,
    );
    let a = fs::read(path("a/dataset/sequences.fasta")).unwrap();
    let b = fs::read(path("b/dataset/sequences.fasta")).unwrap();
    let c = fs::read(path("c/dataset/sequences.fasta")).unwrap();
    assert_ne!(a, b, "--seed 99 must override the config seed");
    assert_eq!(b, c, "equal seeds must reproduce the corpus");
}
