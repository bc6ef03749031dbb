use serde::{Deserialize, Serialize};

use super::SpectralModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Burgers,
}

/// Model section of a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub n_total: usize,
    pub alpha: f64,
    pub r_cut: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Burgers,
            n_total: 16,
            alpha: 0.75,
            r_cut: 0.05,
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<SpectralModel> {
        match self.kind {
            ModelKind::Burgers => SpectralModel::burgers(self.n_total, self.alpha, self.r_cut),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }
}
