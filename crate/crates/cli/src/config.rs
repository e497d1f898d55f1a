use std::path::Path;

use serde::{Deserialize, Serialize};
use sosc_core::Hyperparams;

use crate::error::{CliError, Result};

/// Optional settings shared by all verbs, read from one JSON document.
/// Command-line flags take precedence over every field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hyperparams: Option<Hyperparams>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub dt: Option<f64>,
    /// Scalar control weight; the controller uses `r·I`.
    pub r: Option<f64>,
    pub kappa2: Option<f64>,
    pub in_idx: Option<Vec<usize>>,
    pub out_idx: Option<Vec<usize>>,
    /// Number of task frames for a new task-parameterized model.
    pub frames: Option<usize>,
    /// Controller steps per model step.
    pub upsample: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))
            }
        }
    }
}

/// Double-integrator controller settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlSettings {
    pub dt: f64,
    pub r: f64,
    pub upsample: usize,
}

impl Default for ControlSettings {
    fn default() -> Self {
        ControlSettings { dt: 0.01, r: 1e-2, upsample: 1 }
    }
}

impl ControlSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let d = ControlSettings::default();
        ControlSettings {
            dt: cfg.dt.unwrap_or(d.dt),
            r: cfg.r.unwrap_or(d.r),
            upsample: cfg.upsample.unwrap_or(d.upsample),
        }
    }
}
