//! Experiment configuration files.
//!
//! ```json
//! {
//!   "tree_path": "fixtures/imagenet_like.json",
//!   "dataset": {"kind": "synthetic", "per_class": 1, "seed": 7},
//!   "scorer": {"kind": "synthetic", "params": {"noise_sigma": 0.02}},
//!   "method": "hdc",
//!   "m_final": 16,
//!   "hdc": {"m_prune": 4, "start_level": 3, "strategy": {"kind": "fixed_topk", "default_ratio": 0.5}},
//!   "output_dir": "out/hdc"
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, HarnessError};
use crate::flat::{default_t_max, default_template, FlatConfig};
use crate::hdc::{HdcConfig, PruneStrategy};
use crate::scoring::{SyntheticParams, ENDPOINT_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Flat,
    #[default]
    Hdc,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Method::Flat),
            "hdc" => Ok(Method::Hdc),
            other => Err(format!("unknown method {other:?}, expected flat or hdc")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Flat => "flat",
            Method::Hdc => "hdc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// `per_class` images of every leaf class.
    Synthetic { per_class: usize, seed: u64 },
    /// A dataset file as written by `gen-synthetic`.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerSpec {
    Synthetic {
        #[serde(default)]
        params: SyntheticParams,
    },
    /// Precomputed error matrix, JSON or CSV.
    Replay { matrix_path: PathBuf },
    /// `tcp://host:port` or `exec:<command>`; the environment variable
    /// `HDC_SCORER_ENDPOINT` takes precedence.
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdcSection {
    #[serde(default)]
    pub m_prune: Option<usize>,
    #[serde(default = "one")]
    pub start_level: usize,
    #[serde(default)]
    pub strategy: PruneStrategy,
}

fn one() -> usize {
    1
}

impl Default for HdcSection {
    fn default() -> Self {
        HdcSection {
            m_prune: None,
            start_level: 1,
            strategy: PruneStrategy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tree_path: PathBuf,
    pub dataset: DatasetSpec,
    pub scorer: ScorerSpec,
    #[serde(default)]
    pub method: Method,
    pub m_final: usize,
    #[serde(default)]
    pub sample_seed: u64,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default = "default_t_max")]
    pub t_max: u32,
    #[serde(default)]
    pub hdc: HdcSection,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write every scored request to this replay matrix.
    #[serde(default)]
    pub record_matrix: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads, resolves relative paths and validates a config file.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut config: ExperimentConfig = read_json(path).map_err(|e| match e {
            HarnessError::Io { .. } | HarnessError::Json { .. } => HarnessError::Config(e.to_string()),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.tree_path);
        if let DatasetSpec::File { path } = &mut self.dataset {
            fix(path);
        }
        if let ScorerSpec::Replay { matrix_path } = &mut self.scorer {
            fix(matrix_path);
        }
        if let Some(p) = self.output_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.record_matrix.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(HarnessError::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        must_exist(&self.tree_path, "tree")?;
        match &self.dataset {
            DatasetSpec::File { path } => must_exist(path, "dataset")?,
            DatasetSpec::Synthetic { per_class, .. } if *per_class == 0 => {
                return Err(HarnessError::Config("dataset.per_class must be at least 1".into()))
            }
            DatasetSpec::Synthetic { .. } => {}
        }
        match &self.scorer {
            ScorerSpec::Replay { matrix_path } => must_exist(matrix_path, "replay matrix")?,
            ScorerSpec::Remote { endpoint } => {
                if endpoint.is_none() && std::env::var_os(ENDPOINT_ENV).is_none() {
                    return Err(HarnessError::Config(format!(
                        "remote scorer needs an endpoint or {ENDPOINT_ENV}"
                    )));
                }
            }
            ScorerSpec::Synthetic { .. } => {}
        }
        if self.m_final == 0 {
            return Err(HarnessError::Config("m_final must be at least 1".into()));
        }
        if self.hdc.m_prune == Some(0) {
            return Err(HarnessError::Config("hdc.m_prune must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(HarnessError::Config("workers must be at least 1".into()));
        }
        self.hdc.strategy.validate()?;
        Ok(())
    }

    pub fn flat_config(&self) -> FlatConfig {
        FlatConfig {
            m_final: self.m_final,
            sample_seed: self.sample_seed,
            prompt_template: self.prompt_template.clone(),
            t_max: self.t_max,
        }
    }

    pub fn hdc_config(&self) -> HdcConfig {
        HdcConfig {
            m_prune: self.hdc.m_prune,
            m_final: self.m_final,
            start_level: self.hdc.start_level,
            strategy: self.hdc.strategy.clone(),
            sample_seed: self.sample_seed,
            prompt_template: self.prompt_template.clone(),
            t_max: self.t_max,
        }
    }
}
