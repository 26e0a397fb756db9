//! Run configuration: a single JSON document, every field optional.
//!
//! Precedence is flags > file > built-in defaults. `seed` is the master
//! seed: per-stage generators derive from it with fixed offsets, and the
//! `--seed` flag also overrides the dedicated `train.seed` / `synth.seed`
//! fields so one flag controls the whole run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use foldnet_core::analyze::DistanceMetric;
use foldnet_core::encode::SyntheticSpec;
use foldnet_core::model::ModelConfig;
use foldnet_core::perturb::{ControlOptions, ProfileRows, VariantOptions};
use foldnet_core::train::TrainSchedule;

use crate::CliError;

fn default_validation_fraction() -> f64 {
    0.1
}
fn default_topk() -> usize {
    5
}
fn default_metric() -> DistanceMetric {
    DistanceMetric::SymmetricDivergence
}
fn default_trials() -> usize {
    10
}
fn default_folds_per_trial() -> usize {
    5
}
fn default_max_proteins_per_trial() -> usize {
    60
}
fn default_top_templates() -> usize {
    10
}
fn default_truncation_step() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed (model init, splits, perturbation, clustering).
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainSchedule,
    pub synth: SyntheticSpec,
    /// Per-fold fraction of the corpus held out during `train`.
    pub validation_fraction: f64,
    /// Standardize profile columns at load time.
    pub standardize_profile: bool,
    /// Folds reported by `predict`/`eval`/`rank`.
    pub topk: usize,
    /// Feature-space metric for `cluster`.
    pub metric: DistanceMetric,
    /// Clustering trials.
    pub trials: usize,
    /// Folds sampled per clustering trial.
    pub folds_per_trial: usize,
    /// Protein cap per clustering trial.
    pub max_proteins_per_trial: usize,
    /// Templates returned per `rank` query.
    pub top_templates: usize,
    pub variants: VariantOptions,
    pub controls: ControlOptions,
    /// How derived sequences fill their profile rows in `perturb`.
    pub profile_rows: ProfileRows,
    /// Prefix-length stride of the truncation scan.
    pub truncation_step: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelConfig::default(),
            train: TrainSchedule::default(),
            synth: SyntheticSpec::default(),
            validation_fraction: default_validation_fraction(),
            standardize_profile: false,
            topk: default_topk(),
            metric: default_metric(),
            trials: default_trials(),
            folds_per_trial: default_folds_per_trial(),
            max_proteins_per_trial: default_max_proteins_per_trial(),
            top_templates: default_top_templates(),
            variants: VariantOptions::default(),
            controls: ControlOptions::default(),
            profile_rows: ProfileRows::default(),
            truncation_step: default_truncation_step(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// The document that gets written to `out/config.json` and hashed into
    /// the manifest.
    pub fn canonical_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("config serialization cannot fail");
        text.push('\n');
        text
    }
}
