//! Scenario files.

use std::fs;
use std::path::Path;

use fsreach_core::sim::Scenario;

use crate::error::{AppError, AppResult};
use crate::io::{read_json, sha256_hex, to_json};

/// Reads and validates a scenario.
pub fn load_scenario(path: &Path) -> AppResult<Scenario> {
    let s: Scenario = read_json(path)?;
    s.validate().map_err(|e| AppError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(s)
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> AppResult<()> {
    let text = to_json(scenario)?;
    fs::write(path, text).map_err(|source| AppError::Output { path: path.to_path_buf(), source })
}

/// Command-line replacements for scenario fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub resolution: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) -> fsreach_core::Result<()> {
        if let Some(a) = self.alpha {
            s.alpha = a;
        }
        if let Some(h) = self.horizon {
            s.horizon = h;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(r) = self.resolution {
            s.resolution = r;
        }
        s.validate()
    }
}

/// Hash of the effective configuration after overrides.
pub fn config_hash(s: &Scenario) -> AppResult<String> {
    Ok(sha256_hex(to_json(s)?.as_bytes()))
}
