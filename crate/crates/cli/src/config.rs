use std::path::{Path, PathBuf};

use activermap_core::active::{ActiveConfig, NbvPolicy};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// A run description as written in a config file. Relative paths are
/// resolved against the file's directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub scene: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Policies swept by `compare`.
    #[serde(default = "all_policies")]
    pub policies: Vec<NbvPolicy>,
    #[serde(default)]
    pub active: ActiveConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn all_policies() -> Vec<NbvPolicy> {
    vec![NbvPolicy::Entropy, NbvPolicy::Fvs, NbvPolicy::Random]
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("scene file {0} does not exist")]
    MissingScene(PathBuf),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(parse_err(format!(
                "unsupported version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.scene.is_relative() {
            cfg.scene = base.join(&cfg.scene);
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        if !cfg.scene.is_file() {
            return Err(ConfigError::MissingScene(cfg.scene));
        }
        cfg.active.validate().map_err(|e| parse_err(e.to_string()))?;
        Ok(cfg)
    }
}
