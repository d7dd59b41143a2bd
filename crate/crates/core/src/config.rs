//! Run configuration files.
//!
//! A config is a TOML document whose keys mirror the market constants:
//!
//! ```toml
//! sigma_high = 50.0
//! ratio = 2.0          # or: sigma_low = 25.0
//! mu = 0.6
//! lambda = 0.007
//! distribution = "uniform"
//! c_min = 0.5
//! c_max = 2.0
//! K = 5
//! M = 5
//! n_rounds = 100000
//! seed = 1
//! ```
//!
//! Every key is optional; missing keys take the reference values. Command-line
//! flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::params::{reference, MarketParams, ValidatedParams};

pub const DEFAULT_RATIO: f64 = 2.0;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Market(#[from] crate::error::MarketError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_max: Option<f64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub num_sellers: Option<usize>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub max_free_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A config with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub sigma_high: f64,
    pub sigma_low: f64,
    /// Nominal `sigma_high / sigma_low` used for labels and grid cells.
    pub ratio: f64,
    pub mu: f64,
    pub lambda: f64,
    pub distribution: String,
    pub c_min: f64,
    pub c_max: f64,
    #[serde(rename = "K")]
    pub num_sellers: usize,
    #[serde(rename = "M")]
    pub max_free_samples: usize,
    pub n_rounds: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        let sigma_high = self.sigma_high.unwrap_or(reference::SIGMA_HIGH);
        let (sigma_low, ratio) = match (self.sigma_low, self.ratio) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "give either ratio or sigma_low, not both".into(),
                ))
            }
            (Some(s), None) => (s, sigma_high / s),
            (None, Some(r)) => (sigma_high / r, r),
            (None, None) => (sigma_high / DEFAULT_RATIO, DEFAULT_RATIO),
        };
        let distribution = self
            .distribution
            .clone()
            .unwrap_or_else(|| "uniform".into());
        if distribution != "uniform" {
            return Err(ConfigError::Invalid(format!(
                "unsupported distribution {distribution:?} (only \"uniform\")"
            )));
        }
        Ok(ResolvedConfig {
            sigma_high,
            sigma_low,
            ratio,
            mu: self.mu.unwrap_or(reference::MU),
            lambda: self.lambda.unwrap_or(reference::LAMBDA),
            distribution,
            c_min: self.c_min.unwrap_or(reference::C_MIN),
            c_max: self.c_max.unwrap_or(reference::C_MAX),
            num_sellers: self.num_sellers.unwrap_or(5),
            max_free_samples: self.max_free_samples.unwrap_or(reference::MAX_FREE_SAMPLES),
            n_rounds: self.n_rounds.unwrap_or(reference::N_ROUNDS),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
        })
    }
}

impl ResolvedConfig {
    pub fn market_params(&self) -> Result<MarketParams, ConfigError> {
        Ok(MarketParams {
            sigma_low: self.sigma_low,
            sigma_high: self.sigma_high,
            mu: self.mu,
            lambda: self.lambda,
            num_sellers: self.num_sellers,
            max_free_samples: self.max_free_samples,
            cost: CostModel::uniform(self.c_min, self.c_max)?,
        })
    }

    pub fn validated(&self) -> Result<ValidatedParams, ConfigError> {
        Ok(self.market_params()?.validate()?)
    }
}
