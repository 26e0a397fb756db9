//! `foldnet` — protein fold classification pipeline as subcommands.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error.

mod commands;
mod config;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use foldnet_core::analyze::{AnalyzeError, DistanceMetric};
use foldnet_core::encode::EncodeError;
use foldnet_core::model::ModelError;
use foldnet_core::perturb::PerturbError;
use foldnet_core::train::TrainError;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Analyze(#[from] AnalyzeError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    /// Euclidean distance.
    Euclid,
    /// Manhattan distance.
    Manh,
    /// Log-scaled Pearson dissimilarity.
    Corr,
    /// Smoothed symmetric KL divergence.
    Kl,
}

impl From<MetricArg> for DistanceMetric {
    fn from(arg: MetricArg) -> DistanceMetric {
        match arg {
            MetricArg::Euclid => DistanceMetric::Euclidean,
            MetricArg::Manh => DistanceMetric::Manhattan,
            MetricArg::Corr => DistanceMetric::Correlation,
            MetricArg::Kl => DistanceMetric::SymmetricDivergence,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "foldnet",
    version,
    about = "Variable-length protein fold classification",
    propagate_version = true
)]
pub struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub(crate) config: Option<PathBuf>,
    /// Master random seed; overrides every seed field in the config.
    #[arg(long, global = true, value_name = "N")]
    pub(crate) seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub(crate) out: Option<PathBuf>,
    /// Model checkpoint to read (or write, for `train`).
    #[arg(long, global = true, value_name = "PATH")]
    pub(crate) checkpoint: Option<PathBuf>,
    /// How many top folds to report.
    #[arg(long, global = true, value_name = "N")]
    pub(crate) topk: Option<usize>,
    /// Feature-space distance metric.
    #[arg(long, global = true, value_enum, value_name = "METRIC")]
    pub(crate) metric: Option<MetricArg>,
    /// Width of the training length bins.
    #[arg(long, global = true, value_name = "N")]
    pub(crate) bin_size: Option<usize>,
    /// Number of clustering trials.
    #[arg(long, global = true, value_name = "N")]
    pub(crate) trials: Option<usize>,
    #[command(subcommand)]
    pub(crate) command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus as a dataset directory.
    Synth,
    /// Validate a dataset and write its normalized copy plus a load report.
    Encode {
        /// Dataset directory (sequences.fasta, optional labels/annotations).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Train a model on a labeled dataset.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Evaluate a checkpoint: top-k accuracy, overall and by fold size.
    Eval {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Predict the most probable folds for sequences.
    Predict {
        /// Literal residue sequence.
        #[arg(long, value_name = "RESIDUES", conflicts_with = "fasta")]
        sequence: Option<String>,
        /// FASTA file of query sequences.
        #[arg(long, value_name = "PATH")]
        fasta: Option<PathBuf>,
    },
    /// Extract fold features from a labeled dataset into a template database.
    Extract {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Repeated-sampling clustering accuracy over a template database.
    Cluster {
        /// Template database written by `extract`.
        #[arg(long, value_name = "PATH")]
        templates: PathBuf,
    },
    /// Rank database templates against query sequences.
    Rank {
        #[arg(long, value_name = "PATH")]
        templates: PathBuf,
        #[arg(long, value_name = "PATH")]
        fasta: PathBuf,
    },
    /// Variant divergence and truncation scan for one wild-type protein.
    Perturb {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Wild-type protein id (default: first protein of the dataset).
        #[arg(long, value_name = "ID")]
        id: Option<String>,
    },
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.train.seed = seed;
        config.synth.seed = seed;
    }
    if let Some(bin_size) = cli.bin_size {
        config.train.bin_size = bin_size;
    }
    if let Some(topk) = cli.topk {
        config.topk = topk;
    }
    if let Some(metric) = cli.metric {
        config.metric = metric.into();
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = effective_config(&cli)?;
    match &cli.command {
        Command::Synth => commands::synth(&cli, &config),
        Command::Encode { data } => commands::encode(&cli, &config, data),
        Command::Train { data } => commands::train(&cli, &config, data),
        Command::Eval { data } => commands::eval(&cli, &config, data),
        Command::Predict { sequence, fasta } => {
            commands::predict(&cli, &config, sequence.as_deref(), fasta.as_deref())
        }
        Command::Extract { data } => commands::extract(&cli, &config, data),
        Command::Cluster { templates } => commands::cluster(&cli, &config, templates),
        Command::Rank { templates, fasta } => commands::rank(&cli, &config, templates, fasta),
        Command::Perturb { data, id } => commands::perturb(&cli, &config, data, id.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // Help goes to stdout, diagnostics to stderr.
            err.print().expect("writing clap output");
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
