//! Configuration-driven experiment runner behind the `hdc` command line.

mod compare;
mod config;
mod dataset;
mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::flat::ClassifyError;
use crate::label_tree::TreeError;
use crate::metrics::MetricsError;
use crate::scoring::ScoreError;

pub use compare::{compare, Comparison, ComparisonRow};
pub use config::{DatasetSpec, ExperimentConfig, HdcSection, Method, ScorerSpec};
pub use dataset::{gen_synthetic, Dataset};
pub use run::{build_scorer, classify_dataset, run_experiment, write_outputs, MethodConfig, RunOutput};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("reports come from different datasets ({baseline} vs {method})")]
    DatasetMismatch { baseline: String, method: String },
}

impl HarnessError {
    /// 1 for usage and configuration problems, 2 for bad data or a failing scorer.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Classify(ClassifyError::Config(_)) => 1,
            HarnessError::Score(ScoreError::Config(_) | ScoreError::Template(_)) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, HarnessError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| HarnessError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
