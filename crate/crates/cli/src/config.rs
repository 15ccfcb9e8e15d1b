//! Optional TOML configuration file. Precedence everywhere is
//! flags > config file > built-in defaults; each command embeds the fully
//! resolved configuration into its output artifacts.

use std::path::Path;

use clickchoice_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    pub recency: Option<String>,
    pub frequency: Option<String>,
    pub recency_levels: Option<usize>,
    pub frequency_levels: Option<usize>,
    pub lookback_days: Option<i64>,
    pub label_horizon_days: Option<i64>,
    pub session_gap_min: Option<i64>,
    pub outlier_frac: Option<f64>,
    pub sample_rate: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub model: Option<String>,
    pub classes: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub loglik_rel_tol: Option<f64>,
    pub epsilon: Option<f64>,
    pub kkt_tol: Option<f64>,
    pub pseudo_count: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub top_n: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidInput(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("config file {}: {e}", path.display())))
    }
}

/// flag > config file > default.
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// flag > config file, for settings without a default.
pub fn resolve_required<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T> {
    flag.or(file).ok_or_else(|| {
        Error::InvalidInput(format!(
            "{what} must be given on the command line or in the config file"
        ))
    })
}
