//! Optional `key = value` parameter files. Command-line flags take precedence.

use std::path::Path;

use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub tol: Option<f64>,
    pub max_it: Option<usize>,
    pub theta: Option<f64>,
    pub max_ref: Option<usize>,
    pub eps_warp: Option<f64>,
    pub max_warps: Option<usize>,
    pub sigma: Option<f64>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
