//! Data ingestion, preprocessing, cross-validation, metrics, synthetic
//! cohorts, configuration and the end-to-end runner.

pub mod cli;
pub mod config;
pub mod cv;
pub mod data;
pub mod metrics;
pub mod preprocess;
pub mod run;
pub mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid fold count {0} (need at least 2 and no more than the sample count)")]
    InvalidFolds(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("file not found or unreadable: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("subject {subject_id}: matrix is {rows}x{cols}, expected {expected}x{expected}")]
    DimensionMismatch { subject_id: String, rows: usize, cols: usize, expected: usize },
    #[error("duplicate subject id '{0}'")]
    DuplicateSubject(String),
    #[error("labels are not contiguous: class {0} has no subjects")]
    NonContiguousLabels(usize),
    #[error("position ({i}, {j}) is missing for every subject")]
    AllMissingColumn { i: usize, j: usize },
    #[error("invalid synthetic cohort: {0}")]
    InvalidCounts(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {}", .0.display(), .1)]
    Csv(PathBuf, String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<PipelineError> },
    #[error("{0} subject(s) failed validation")]
    Validation(usize),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Spd(#[from] crate::spd::SpdError),
    #[error(transparent)]
    Gnn(#[from] crate::gnn::GnnError),
    #[error(transparent)]
    Selection(#[from] crate::selection::SelectionError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Explain(#[from] crate::explain::ExplainError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }
}
