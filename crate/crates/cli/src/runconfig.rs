//! The unified run configuration: one strict JSON document covering
//! data discovery, preprocessing, both model families, training, and
//! query defaults. Unknown keys are rejected so typos fail loudly, and
//! every block has defaults so a minimal `{}` config runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synmap_core::cae::{CaeConfig, TrainConfig};
use synmap_core::digest::{canonical_json_digest, Digest};
use synmap_core::imgproc::PreprocessConfig;
use synmap_core::metrics::MetricKind;
use synmap_core::vqvae::VqvaeConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line} column {column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dir: PathBuf,
    pub pattern: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { dir: PathBuf::from("."), pattern: crate::synth::DEFAULT_PATTERN.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueryDefaults {
    pub metric: MetricKind,
    pub k: usize,
    /// Half-width of the temporal exclusion window; 0 disables it.
    pub exclude_days: f64,
}

impl Default for QueryDefaults {
    fn default() -> Self {
        QueryDefaults { metric: MetricKind::Cosine, k: 5, exclude_days: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub cae: CaeConfig,
    pub vqvae: VqvaeConfig,
    pub train: TrainConfig,
    pub query: QueryDefaults,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// SHA-256 of the canonical JSON encoding of the fully resolved
    /// config (defaults applied, overrides folded in). Logged by every
    /// command so artifacts are traceable to their exact settings.
    pub fn config_hash(&self) -> Digest {
        canonical_json_digest(self)
    }
}
