//! Experiment description: a `[model]` table (see [`tfsmc::config`]) and an
//! `[experiment]` table.
//!
//! ```toml
//! [model]
//! kind = "linear-gaussian"
//! nu2 = 10.0
//! tau2 = 10.0
//! horizon = 300
//!
//! [experiment]
//! particles = 300
//! replicates = 50
//! t_list = [30, 60, 90]        # default: k T / 10 for k = 1..9
//! nu2_grid = [1.0, 10.0, 98.0] # grid command; default: the model's nu2
//! tau2_grid = [1.0, 98.0]
//! estimator = "n"              # "n2", "n" or "forward-only"
//! beta = "uniform"             # or "proportional"
//! seed = 42
//! data = "obs.csv"             # optional; otherwise simulated per cell
//! trajectories = 300           # backward-simulation draws; default: particles
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tfsmc::{BetaScheme, Estimator, ModelConfig, Resampling};

use crate::error::{CliError, Result};

fn default_particles() -> usize {
    300
}
fn default_replicates() -> usize {
    50
}
fn default_cap() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub t_list: Option<Vec<usize>>,
    #[serde(default)]
    pub nu2_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub tau2_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub beta: BetaScheme,
    #[serde(default)]
    pub resampling: Resampling,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub trajectories: Option<usize>,
    #[serde(default = "default_cap")]
    pub rejection_cap: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: ModelConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut spec = Self::from_toml(&text)?;
        // Dataset paths are relative to the experiment file.
        if let (Some(data), Some(dir)) = (&spec.experiment.data, path.parent()) {
            if data.is_relative() {
                spec.experiment.data = Some(dir.join(data));
            }
        }
        Ok(spec)
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon()
    }

    /// Meeting times to run, defaulting to `k T / 10`, `k = 1..9`, moved
    /// into the estimator's admissible range and deduplicated.
    pub fn t_list(&self) -> Result<Vec<usize>> {
        let horizon = self.horizon();
        let est = self.experiment.estimator;
        let (lo, hi) = est.meeting_range(horizon).ok_or_else(|| {
            CliError::Config(format!("horizon {horizon} is too short for the {} estimator", est.tag()))
        })?;
        match &self.experiment.t_list {
            Some(list) => {
                if list.is_empty() {
                    return Err(CliError::Config("t_list is empty".into()));
                }
                if let Some(t) = list.iter().find(|&&t| t < lo || t > hi) {
                    return Err(CliError::Config(format!(
                        "t = {t} outside {lo}..={hi} for the {} estimator",
                        est.tag()
                    )));
                }
                Ok(list.clone())
            }
            None => {
                let mut out: Vec<usize> = (1..=9).map(|k| (k * horizon / 10).clamp(lo, hi)).collect();
                out.dedup();
                Ok(out)
            }
        }
    }

    /// `(nu2, tau2)` cells; a single `None` cell for finite-state models.
    pub fn cells(&self) -> Result<Vec<Option<(f64, f64)>>> {
        let exp = &self.experiment;
        match &self.model {
            ModelConfig::LinearGaussian(c) => {
                let nu2 = exp.nu2_grid.clone().unwrap_or_else(|| vec![c.nu2]);
                let tau2 = exp.tau2_grid.clone().unwrap_or_else(|| vec![c.tau2]);
                if nu2.is_empty() || tau2.is_empty() {
                    return Err(CliError::Config("noise grids must be nonempty".into()));
                }
                Ok(nu2.iter().flat_map(|&a| tau2.iter().map(move |&b| Some((a, b)))).collect())
            }
            ModelConfig::Discrete(_) => {
                if exp.nu2_grid.is_some() || exp.tau2_grid.is_some() {
                    return Err(CliError::Config("noise grids apply to linear Gaussian models only".into()));
                }
                Ok(vec![None])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let exp = &self.experiment;
        if exp.particles == 0 {
            return Err(CliError::Config("particles must be at least 1".into()));
        }
        if exp.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if self.horizon() == 0 {
            return Err(CliError::Config("horizon must be at least 1".into()));
        }
        if exp.data.is_some() && self.cells()?.len() > 1 {
            return Err(CliError::Config("a fixed dataset cannot be shared across grid cells".into()));
        }
        self.t_list()?;
        Ok(())
    }
}
