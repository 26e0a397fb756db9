//! Fold-feature analysis: distance metrics, hierarchical clustering with a
//! repeated-sampling accuracy protocol, and template ranking.

mod cluster;
mod metric;
mod template;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::ModelError;

pub use cluster::{
    clustering_accuracy, clustering_accuracy_exhaustive, clustering_protocol,
    hierarchical_cluster, ClusteringOutcome, EXHAUSTIVE_MATCHING_LIMIT,
};
pub use metric::{distance, pairwise_distances, pearson_correlation, DistanceMetric};
pub use template::{
    rank_templates, RankedTemplate, TemplateDb, TemplateRanking, TemplateRecord,
};

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("feature dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("divergence needs nonnegative features, found {value} at component {index}")]
    NegativeFeature { index: usize, value: f64 },
    #[error("empty feature set")]
    EmptyFeatureSet,
    #[error("distance matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NonSquareMatrix { rows: usize, row: usize, cols: usize },
    #[error("cannot form {clusters} clusters from {points} points")]
    BadClusterCount { clusters: usize, points: usize },
    #[error("assignment covers {left} points but {right} labels were given")]
    LengthMismatch { left: usize, right: usize },
    #[error("exhaustive matching supports at most {limit} classes, got {classes}")]
    TooManyClasses { classes: usize, limit: usize },
    #[error("sampling needs {needed} folds with at least 2 proteins, only {eligible} qualify")]
    InsufficientFolds { eligible: usize, needed: usize },
    #[error("template database is empty")]
    EmptyTemplateDb,
    #[error("template '{id}' has a {found}-dimensional feature, database uses {expected}")]
    MixedFeatureDims {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("protein '{id}' has no fold label")]
    Unlabeled { id: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: not a template database (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported template database version {found}")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: corrupt template database: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}
