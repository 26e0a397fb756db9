//! One function per subcommand. Every command that produces artifacts
//! writes them under `--out`, together with `config.json` (the effective
//! configuration) and `manifest.json` (command, config hash, seed,
//! timestamp). The timestamp is the only line that varies between
//! identical runs.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;
use sha2::{Digest, Sha256};

use foldnet_core::analyze::{clustering_protocol, TemplateDb, TemplateRanking};
use foldnet_core::encode::{
    encode_synthetic_sequence, generate_synthetic, load_dataset, parse_fasta, write_dataset,
    EncodedProtein, LoadOptions,
};
use foldnet_core::model::{build_model, load_checkpoint, predict_topk, save_checkpoint};
use foldnet_core::perturb::{
    divergence_experiment, generate_controls, generate_variants, truncation_scan,
    write_divergence_tsv, write_truncation_tsv, ExperimentOptions, PerturbationSet,
    TruncationOptions,
};
use foldnet_core::train::{
    evaluate_topk, fold_sizes, group_evaluate, split_train_validation, write_training_log,
    LogRecord, TrainOutcome,
};

use crate::config::RunConfig;
use crate::{Cli, CliError};

// Seed offsets: one master seed drives every stage without collisions.
const SPLIT_SEED_OFFSET: u64 = 1;
const VARIANT_SEED_OFFSET: u64 = 2;
const CONTROL_SEED_OFFSET: u64 = 3;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf, CliError> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("this command requires --out DIR".into()))?;
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    Ok(out)
}

fn checkpoint_path(cli: &Cli) -> Result<&Path, CliError> {
    cli.checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Usage("this command requires --checkpoint PATH".into()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Writes `config.json` and `manifest.json` into `out`.
fn write_run_artifacts(out: &Path, command: &str, config: &RunConfig) -> Result<(), CliError> {
    let config_text = config.canonical_json();
    write_text(&out.join("config.json"), &config_text)?;

    let digest = Sha256::digest(config_text.as_bytes());
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = json!({
        "command": command,
        "config_sha256": format!("{digest:x}"),
        "seed": config.seed,
        "timestamp_unix": timestamp,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    text.push('\n');
    write_text(&out.join("manifest.json"), &text)
}

fn load_corpus(config: &RunConfig, data: &Path) -> Result<foldnet_core::encode::LoadedDataset, CliError> {
    let options = LoadOptions {
        standardize_profile: config.standardize_profile,
    };
    Ok(load_dataset(data, options)?)
}

pub fn synth(cli: &Cli, config: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let corpus = generate_synthetic(&config.synth)?;
    let dataset_dir = out.join("dataset");
    write_dataset(&dataset_dir, &corpus)?;
    write_run_artifacts(&out, "synth", config)?;
    println!(
        "wrote {} proteins across {} folds to {}",
        corpus.len(),
        config.synth.num_folds,
        dataset_dir.display()
    );
    Ok(())
}

pub fn encode(cli: &Cli, config: &RunConfig, data: &Path) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let loaded = load_corpus(config, data)?;
    let dataset_dir = out.join("dataset");
    write_dataset(&dataset_dir, &loaded.proteins)?;

    let report = &loaded.report;
    let substitutions: Vec<_> = report
        .substitutions
        .iter()
        .map(|s| {
            json!({
                "id": s.id,
                "position": s.position,
                "from": s.from.to_string(),
                "to": s.to.to_string(),
            })
        })
        .collect();
    let report_json = json!({
        "proteins": loaded.proteins.len(),
        "labeled": report.labeled,
        "missing_profile": report.missing_profile,
        "missing_ss": report.missing_ss,
        "missing_sa": report.missing_sa,
        "substitutions": substitutions,
    });
    let mut text = serde_json::to_string_pretty(&report_json).expect("report serialization");
    text.push('\n');
    write_text(&out.join("report.json"), &text)?;
    write_run_artifacts(&out, "encode", config)?;
    println!(
        "encoded {} proteins ({}labeled) into {}",
        loaded.proteins.len(),
        if report.labeled { "" } else { "un" },
        dataset_dir.display()
    );
    Ok(())
}

pub fn train(cli: &Cli, config: &RunConfig, data: &Path) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let loaded = load_corpus(config, data)?;
    if !loaded.report.labeled {
        return Err(CliError::Usage(format!(
            "{}: training needs labels.tsv",
            data.display()
        )));
    }

    let (train_part, validation) = if config.validation_fraction > 0.0 {
        let (t, v) = split_train_validation(
            loaded.proteins,
            config.validation_fraction,
            config.seed.wrapping_add(SPLIT_SEED_OFFSET),
        )?;
        (t, v)
    } else {
        (loaded.proteins, Vec::new())
    };

    let state = build_model(config.model.clone(), config.seed)?;
    let outcome: TrainOutcome = foldnet_core::train::train(
        state,
        &train_part,
        &config.train,
        (!validation.is_empty()).then_some(validation.as_slice()),
    )?;

    write_training_log(&outcome.log, &out.join("train_log.jsonl"))?;
    let checkpoint = cli
        .checkpoint
        .clone()
        .unwrap_or_else(|| out.join("model.ckpt"));
    save_checkpoint(&outcome.state, &checkpoint)?;
    write_run_artifacts(&out, "train", config)?;

    let last_pass = outcome.log.iter().rev().find_map(|r| match r {
        LogRecord::Pass {
            pass,
            mean_loss,
            train,
            ..
        } => Some((*pass, *mean_loss, train.top1)),
        _ => None,
    });
    println!(
        "trained on {} proteins ({} validation)",
        train_part.len(),
        validation.len()
    );
    if let Some((pass, mean_loss, top1)) = last_pass {
        println!("final pass {pass}: mean loss {mean_loss:.4}, train top-1 {top1:.4}");
    }
    if let (Some(pass), Some(top1)) = (outcome.best_pass, outcome.best_top1) {
        println!("kept pass {pass}: validation top-1 {top1:.4}");
    }
    println!("checkpoint: {}", checkpoint.display());
    Ok(())
}

pub fn eval(cli: &Cli, config: &RunConfig, data: &Path) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let state = load_checkpoint(checkpoint_path(cli)?)?;
    let corpus = load_corpus(config, data)?.proteins;

    let mut ks = vec![1, 5, 10, config.topk];
    ks.retain(|&k| k >= 1 && k <= state.config.num_folds);
    ks.sort_unstable();
    ks.dedup();
    let capacity = config.train.batch_capacity;

    let overall = evaluate_topk(&state, &corpus, &ks, capacity)?;
    let mut accuracy = String::from("k\tcorrect\ttotal\taccuracy\n");
    for row in &overall {
        accuracy.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            row.k, row.correct, row.total, row.accuracy
        ));
    }
    write_text(&out.join("accuracy.tsv"), &accuracy)?;

    let sizes = fold_sizes(&corpus)?;
    let groups = group_evaluate(&state, &corpus, &sizes, &ks, capacity)?;
    let mut grouped = String::from("class\tcount\tk\tcorrect\ttotal\taccuracy\n");
    for group in &groups {
        for row in &group.accuracies {
            grouped.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                group.class.label(),
                group.count,
                row.k,
                row.correct,
                row.total,
                row.accuracy
            ));
        }
    }
    write_text(&out.join("groups.tsv"), &grouped)?;
    write_run_artifacts(&out, "eval", config)?;

    for row in &overall {
        println!("top-{}: {:.4} ({}/{})", row.k, row.accuracy, row.correct, row.total);
    }
    Ok(())
}

pub fn predict(
    cli: &Cli,
    config: &RunConfig,
    sequence: Option<&str>,
    fasta: Option<&Path>,
) -> Result<(), CliError> {
    if sequence.is_some() == fasta.is_some() {
        return Err(CliError::Usage(
            "predict needs exactly one of --sequence or --fasta".into(),
        ));
    }
    let state = load_checkpoint(checkpoint_path(cli)?)?;
    let queries: Vec<EncodedProtein> = match (sequence, fasta) {
        (Some(residues), _) => {
            vec![encode_synthetic_sequence("query", residues, None)?]
        }
        (_, Some(path)) => parse_fasta(path)?
            .records
            .iter()
            .map(|r| encode_synthetic_sequence(&r.id, &r.residues, None))
            .collect::<Result<_, _>>()?,
        _ => unreachable!("exactly one input source was checked above"),
    };

    let k = config.topk.clamp(1, state.config.num_folds);
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for query in &queries {
        for (fold, probability) in predict_topk(&state, query, k)? {
            writeln!(w, "{}\t{fold}\t{probability}", query.id).map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?;
        }
    }
    Ok(())
}

pub fn extract(cli: &Cli, config: &RunConfig, data: &Path) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let state = load_checkpoint(checkpoint_path(cli)?)?;
    let corpus = load_corpus(config, data)?.proteins;
    let db = TemplateDb::from_corpus(&state, &corpus, config.train.batch_capacity)?;
    db.save(&out.join("templates.db"))?;
    db.write_tsv(&out.join("features.tsv"))?;
    write_run_artifacts(&out, "extract", config)?;
    println!("extracted {} templates (dim {})", db.len(), db.dim());
    Ok(())
}

pub fn cluster(cli: &Cli, config: &RunConfig, templates: &Path) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let db = TemplateDb::load(templates)?;
    let outcome = clustering_protocol(
        &db,
        config.metric,
        config.trials,
        config.folds_per_trial,
        config.max_proteins_per_trial,
        config.seed,
    )?;

    let mut text = format!("# metric\t{}\ntrial\taccuracy\n", outcome.metric.name());
    for (trial, accuracy) in outcome.trial_accuracies.iter().enumerate() {
        text.push_str(&format!("{trial}\t{accuracy}\n"));
    }
    text.push_str(&format!("# mean_accuracy\t{}\n", outcome.mean_accuracy));
    write_text(&out.join("clustering.tsv"), &text)?;
    write_run_artifacts(&out, "cluster", config)?;
    println!(
        "{}: mean clustering accuracy {:.4} over {} trials",
        outcome.metric.name(),
        outcome.mean_accuracy,
        outcome.trials
    );
    Ok(())
}

pub fn rank(cli: &Cli, config: &RunConfig, templates: &Path, fasta: &Path) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let state = load_checkpoint(checkpoint_path(cli)?)?;
    let db = TemplateDb::load(templates)?;
    let queries = parse_fasta(fasta)?;

    let mut text = String::from("query\trank\ttemplate\tfold\tscore\n");
    for record in &queries.records {
        let query = encode_synthetic_sequence(&record.id, &record.residues, None)?;
        match rank_one(&state, &query, &db, config)? {
            TemplateRanking::Ranked(hits) => {
                for (position, hit) in hits.iter().enumerate() {
                    text.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        record.id,
                        position + 1,
                        hit.id,
                        hit.fold,
                        hit.score
                    ));
                }
            }
            TemplateRanking::NoTemplatesInPredictedFolds { predicted_folds } => {
                let folds = predicted_folds
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(",");
                text.push_str(&format!(
                    "# {}: no templates in predicted folds {}\n",
                    record.id, folds
                ));
            }
        }
    }
    write_text(&out.join("ranking.tsv"), &text)?;
    write_run_artifacts(&out, "rank", config)?;
    println!("ranked {} queries against {} templates", queries.records.len(), db.len());
    Ok(())
}

fn rank_one(
    state: &foldnet_core::model::ModelState,
    query: &EncodedProtein,
    db: &TemplateDb,
    config: &RunConfig,
) -> Result<TemplateRanking, CliError> {
    Ok(foldnet_core::analyze::rank_templates(
        state,
        query,
        db,
        config.topk,
        config.top_templates,
    )?)
}

pub fn perturb(cli: &Cli, config: &RunConfig, data: &Path, id: Option<&str>) -> Result<(), CliError> {
    let out = out_dir(cli)?;
    let state = load_checkpoint(checkpoint_path(cli)?)?;
    let corpus = load_corpus(config, data)?.proteins;

    let wild_type = match id {
        Some(id) => corpus
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| CliError::Usage(format!("no protein '{id}' in {}", data.display())))?,
        None => corpus
            .first()
            .ok_or_else(|| CliError::Usage(format!("{}: dataset is empty", data.display())))?,
    };

    let variants = generate_variants(
        &wild_type.residues,
        &config.variants,
        config.seed.wrapping_add(VARIANT_SEED_OFFSET),
    )?;
    let controls = generate_controls(
        &corpus,
        &config.controls,
        config.seed.wrapping_add(CONTROL_SEED_OFFSET),
    )?;
    let set = PerturbationSet {
        wild_type: wild_type.id.clone(),
        variants,
        controls,
    };

    let options = ExperimentOptions {
        profile: config.profile_rows,
        batch_capacity: config.train.batch_capacity,
    };
    let report = divergence_experiment(&state, wild_type, &set, &options)?;
    write_divergence_tsv(&report, &out.join("divergence.tsv"))?;

    let truncation = truncation_scan(
        &state,
        std::slice::from_ref(wild_type),
        &TruncationOptions {
            step: config.truncation_step,
            profile: config.profile_rows,
            batch_capacity: config.train.batch_capacity,
        },
    )?;
    write_truncation_tsv(&truncation, &out.join("truncation.tsv"))?;

    let summary = json!({
        "wild_type": report.wild_type,
        "variants": report.test.n_first,
        "controls": report.test.n_second,
        "variant_median_kl": report.variant_median,
        "control_median_kl": report.control_median,
        "rank_sum_statistic": report.test.statistic,
        "p_value": report.test.p_value,
        "method": format!("{:?}", report.test.method),
        "stable_prefix_fraction": truncation.mean_fraction,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serialization");
    text.push('\n');
    write_text(&out.join("summary.json"), &text)?;
    write_run_artifacts(&out, "perturb", config)?;

    println!(
        "{}: variant median KL {:.4}, control median KL {:.4}, p = {:.4}",
        report.wild_type, report.variant_median, report.control_median, report.test.p_value
    );
    println!(
        "truncation: stable from fraction {:.4} of the sequence",
        truncation.mean_fraction
    );
    Ok(())
}
