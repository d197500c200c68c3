//! Run configuration: a flat JSON object, validated into model parameters
//! plus run settings.

use std::fmt;

use serde::{Deserialize, Serialize};
use sis_lab_core::sde::{Scheme, DEFAULT_DT};
use sis_lab_core::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse { line: usize, column: usize, message: String },
    Validation(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, column, message } => {
                write!(f, "parse error at line {line}, column {column}: {message}")
            }
            ConfigError::Validation(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Keys accepted in a config file. `sigma2` may replace `sigma`; `c0` and
/// `r0_det` override the noise level and contact rate so that sweeps can
/// move along derived axes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0_det: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub i0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
}

/// Names that may be used as sweep axes.
pub const AXES: [&str; 8] = ["beta", "gamma", "mu", "sigma", "sigma2", "N", "c0", "r0_det"];

impl RawConfig {
    /// Sets a model-level key by name, as a sweep axis does.
    pub fn set_axis(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        let slot = match name {
            "beta" => &mut self.beta,
            "gamma" => &mut self.gamma,
            "mu" => &mut self.mu,
            "sigma" => {
                self.sigma2 = None;
                &mut self.sigma
            }
            "sigma2" => {
                self.sigma = None;
                &mut self.sigma2
            }
            "N" => &mut self.n,
            "c0" => &mut self.c0,
            "r0_det" => &mut self.r0_det,
            other => {
                return Err(ConfigError::Validation(format!(
                    "unknown sweep axis `{other}` (expected one of {})",
                    AXES.join(", ")
                )))
            }
        };
        *slot = Some(value);
        Ok(())
    }
}

/// Parses a JSON object from `text`.
pub fn parse_config(text: &str) -> Result<RawConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Reads `source` as a file path, or as inline JSON when it starts with `{`.
pub fn load_config(source: &str) -> Result<RawConfig, ConfigError> {
    if source.trim_start().starts_with('{') {
        return parse_config(source);
    }
    let text = std::fs::read_to_string(source).map_err(|e| ConfigError::Parse {
        line: 0,
        column: 0,
        message: format!("cannot read {source}: {e}"),
    })?;
    parse_config(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub i0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub scheme: Scheme,
    pub paths: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    pub bins: usize,
    pub threshold: f64,
    pub n_cells: usize,
    pub tol: f64,
    pub max_time: f64,
    pub points: usize,
    pub probe_depth: f64,
    pub epsilon: f64,
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: ModelParams,
    pub run: RunSettings,
}

fn require(value: Option<f64>, field: &str) -> Result<f64, ConfigError> {
    value.ok_or_else(|| ConfigError::Validation(format!("{field} is required")))
}

fn positive(value: f64, field: &str) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::Validation(format!("{field} must be > 0")))
    }
}

/// Resolves model parameters and applies run defaults.
pub fn validate(raw: &RawConfig) -> Result<Config, ConfigError> {
    let n = positive(require(raw.n, "N")?, "N")?;
    let gamma = require(raw.gamma, "gamma")?;
    let mu = require(raw.mu, "mu")?;
    let m = gamma + mu;

    let beta = match (raw.beta, raw.r0_det) {
        (_, Some(r)) => positive(r, "r0_det")? * m / n,
        (Some(b), None) => positive(b, "beta")?,
        (None, None) => return Err(ConfigError::Validation("beta is required".into())),
    };
    let sigma_sq = match (raw.sigma, raw.sigma2, raw.c0) {
        (_, _, Some(c0)) => 2.0 * m / (positive(c0, "c0")? * n * n),
        (Some(_), Some(_), None) => {
            return Err(ConfigError::Validation("give sigma or sigma2, not both".into()))
        }
        (Some(s), None, None) => {
            if !(s >= 0.0) {
                return Err(ConfigError::Validation("sigma must be >= 0".into()));
            }
            s * s
        }
        (None, Some(s2), None) => s2,
        (None, None, None) => return Err(ConfigError::Validation("sigma is required".into())),
    };
    let params = ModelParams::with_noise_variance(beta, gamma, mu, sigma_sq, n)
        .map_err(|e| ConfigError::Validation(strip_prefix(&e.to_string())))?;

    let horizon = positive(raw.horizon.unwrap_or(100.0), "horizon")?;
    let scheme = match raw.scheme.as_deref() {
        None | Some("tamed") => Scheme::TransformedTamedEuler,
        Some("direct") => Scheme::DirectEulerClamped,
        Some(other) => {
            return Err(ConfigError::Validation(format!(
                "scheme must be \"tamed\" or \"direct\", got \"{other}\""
            )))
        }
    };
    let run = RunSettings {
        i0: raw.i0.unwrap_or(0.5 * n),
        dt: positive(raw.dt.unwrap_or(DEFAULT_DT), "dt")?,
        horizon,
        burn_in: raw.burn_in.unwrap_or(horizon / 10.0),
        scheme,
        paths: raw.paths.unwrap_or(16),
        seed: raw.seed.unwrap_or(0),
        levels: raw.levels.clone().unwrap_or_default(),
        bins: raw.bins.unwrap_or(50),
        threshold: raw.threshold.unwrap_or(1e-6 * n),
        n_cells: raw.n_cells.unwrap_or(2000),
        tol: positive(raw.tol.unwrap_or(1e-10), "tol")?,
        max_time: positive(raw.max_time.unwrap_or(1e4), "max_time")?,
        points: raw.points.unwrap_or(1000),
        probe_depth: raw.probe_depth.unwrap_or(20.0),
        epsilon: positive(raw.epsilon.unwrap_or(0.1), "epsilon")?,
        sigmas: raw.sigmas.clone().unwrap_or_else(|| vec![0.5, 0.25, 0.1]),
    };
    if !(run.i0 > 0.0 && run.i0 < n) {
        return Err(ConfigError::Validation(format!("i0 must lie in (0, {n})")));
    }
    if !(run.burn_in >= 0.0 && run.burn_in < horizon) {
        return Err(ConfigError::Validation("burn_in must lie in [0, horizon)".into()));
    }
    if run.paths == 0 {
        return Err(ConfigError::Validation("paths must be >= 1".into()));
    }
    if run.bins == 0 {
        return Err(ConfigError::Validation("bins must be >= 1".into()));
    }
    if run.points < 2 {
        return Err(ConfigError::Validation("points must be >= 2".into()));
    }
    Ok(Config { params, run })
}

fn strip_prefix(message: &str) -> String {
    message
        .split_once(": ")
        .map(|(_, rest)| rest.to_string())
        .unwrap_or_else(|| message.to_string())
}
