//! Run configuration: one JSON document with the system fields at top level.
//!
//! ```json
//! {
//!   "horizon": 4, "A": 0.9, "C": 0, "sigma": 1, "D": 1, "F": 0, "gamma": 0.5,
//!   "x0_mean": 0, "x0_var": 1, "hurst1": 0.75, "hurst2": 0.6,
//!   "weights": [0, 1, 1, 1, 1],
//!   "optimizer": { "starts": 8 }, "seed": 7, "paths": 100000,
//!   "gain": [0.5, 0.5, 0.5, 0.5]
//! }
//! ```

use std::fmt;
use std::path::Path;

use fracfilter::{Coefficient, FilterGain, OptimizerOptions, RawSystem, SystemSpec, WeightSpec};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PATHS: usize = 10_000;

fn default_paths() -> usize {
    DEFAULT_PATHS
}

/// The configuration document. After [`load_config`] every field is explicit:
/// coefficients are sequences, defaults are filled and the gain is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub system: RawSystem,
    pub weights: Coefficient,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Gain for `evaluate`, `gradcheck` and `simulate`; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Vec<f64>>,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub starts: Option<usize>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: String, message: String },
    Parse { line: usize, column: usize, message: String },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "{path}: {message}"),
            ConfigError::Parse { line, column, message } => {
                write!(f, "parse error at line {line}, column {column}: {message}")
            }
            ConfigError::Invalid(list) => {
                write!(f, "invalid configuration:")?;
                for item in list {
                    write!(f, "\n  - {item}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// A validated configuration with its typed counterparts.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    /// The fully explicit document echoed into reports.
    pub echo: RunConfig,
    pub system: SystemSpec,
    pub weights: WeightSpec,
    pub gain: FilterGain,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ResolvedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ResolvedConfig, ConfigError> {
    let mut doc: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;
    apply(&mut doc, overrides);
    resolve(doc)
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

fn apply(doc: &mut RunConfig, o: &Overrides) {
    if let Some(v) = o.seed {
        doc.seed = v;
    }
    if let Some(v) = o.paths {
        doc.paths = v;
    }
    if let Some(v) = o.starts {
        doc.optimizer.starts = v;
    }
    if let Some(v) = o.tolerance {
        doc.optimizer.tolerance = v;
    }
    if let Some(v) = o.max_iterations {
        doc.optimizer.max_iterations = v;
    }
}

/// Validate every part of the document and report all problems together.
pub fn resolve(doc: RunConfig) -> Result<ResolvedConfig, ConfigError> {
    let mut problems = Vec::new();
    let system = match fracfilter::validate_system(&doc.system) {
        Ok(s) => Some(s),
        Err(violations) => {
            problems.extend(violations.iter().map(|v| v.to_string()));
            None
        }
    };
    let n = doc.system.horizon;
    let weights = match WeightSpec::for_horizon(&doc.weights, n) {
        Ok(w) => Some(w),
        Err(e) => {
            problems.push(e.to_string());
            None
        }
    };
    if let Err(e) = doc.optimizer.validate() {
        problems.push(format!("optimizer: {e}"));
    }
    if doc.paths < 2 {
        problems.push(format!("paths must be at least 2, got {}", doc.paths));
    }
    let gain = doc.gain.clone().unwrap_or_else(|| vec![0.0; n]);
    if gain.len() != n {
        problems.push(format!("gain: expected length {n}, found {}", gain.len()));
    }
    if gain.iter().any(|g| !g.is_finite()) {
        problems.push("gain: values must be finite".into());
    }
    match (system, weights) {
        (Some(system), Some(weights)) if problems.is_empty() => {
            let echo = RunConfig {
                system: system.to_raw(),
                weights: Coefficient::Sequence(weights.as_slice().to_vec()),
                optimizer: doc.optimizer,
                seed: doc.seed,
                paths: doc.paths,
                gain: Some(gain.clone()),
            };
            Ok(ResolvedConfig { echo, system, weights, gain: FilterGain::new(gain) })
        }
        _ => Err(ConfigError::Invalid(problems)),
    }
}
