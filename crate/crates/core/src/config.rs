//! Model descriptions loaded from TOML.
//!
//! ```toml
//! kind = "linear-gaussian"
//! nu2 = 10.0
//! tau2 = 10.0
//! horizon = 300
//! # Optional; the defaults are X_0 ~ N(0, I). `x0` gives a fixed start.
//! mu0 = [0.0, 0.0]
//! sigma0 = [[1.0, 0.0], [0.0, 1.0]]
//! proposals = "adapted"      # or "prior"
//! xi = "kalman-predictive"   # or { mean = [..], cov = [[..], [..]] }
//! ```
//!
//! ```toml
//! kind = "discrete"
//! horizon = 7
//! initial = [0.5, 0.3, 0.2]  # law of X_0; or x0 = 1
//! transition = [[0.8, 0.1, 0.1], [0.2, 0.7, 0.1], [0.3, 0.3, 0.4]]
//! emission = [[0.9, 0.1], [0.5, 0.5], [0.1, 0.9]]
//! xi = "uniform"             # "predictive", or { tables = [[..], ..] }
//! ```

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::discrete::{DiscreteHmm, DiscreteModel, DiscreteXi};
use crate::error::{Result, SmcError};
use crate::kalman::GaussianBelief;
use crate::linear_gaussian::{LinearGaussianHmm, LinearGaussianModel, XiChoice};
use crate::model::ProposalKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    LinearGaussian(LinearGaussianConfig),
    Discrete(DiscreteConfig),
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SmcError::InvalidConfig(e.to_string()))
    }

    pub fn horizon(&self) -> usize {
        match self {
            ModelConfig::LinearGaussian(c) => c.horizon,
            ModelConfig::Discrete(c) => c.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LgXiConfig {
    #[default]
    KalmanPredictive,
    #[serde(untagged)]
    Fixed { mean: [f64; 2], cov: [[f64; 2]; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGaussianConfig {
    pub nu2: f64,
    pub tau2: f64,
    pub horizon: usize,
    #[serde(default)]
    pub mu0: Option<[f64; 2]>,
    #[serde(default)]
    pub sigma0: Option<[[f64; 2]; 2]>,
    #[serde(default)]
    pub x0: Option<[f64; 2]>,
    #[serde(default)]
    pub proposals: ProposalKind,
    #[serde(default)]
    pub xi: LgXiConfig,
}

fn matrix(m: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

impl LinearGaussianConfig {
    pub fn new(nu2: f64, tau2: f64, horizon: usize) -> Self {
        LinearGaussianConfig {
            nu2,
            tau2,
            horizon,
            mu0: None,
            sigma0: None,
            x0: None,
            proposals: ProposalKind::Adapted,
            xi: LgXiConfig::KalmanPredictive,
        }
    }

    pub fn with_noise(&self, nu2: f64, tau2: f64) -> Self {
        LinearGaussianConfig { nu2, tau2, ..self.clone() }
    }

    pub fn model(&self) -> Result<LinearGaussianModel> {
        let base = LinearGaussianModel::tracking(self.nu2, self.tau2)?;
        match (self.x0, self.mu0, self.sigma0) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(SmcError::InvalidConfig(
                "give either x0 or mu0/sigma0, not both".into(),
            )),
            (Some(x0), None, None) => base.with_initial(Vector2::from(x0), Matrix2::zeros()),
            (None, mu0, sigma0) => base.with_initial(
                mu0.map(Vector2::from).unwrap_or_else(Vector2::zeros),
                sigma0.as_ref().map(matrix).unwrap_or_else(Matrix2::identity),
            ),
        }
    }

    pub fn hmm(&self, observations: Vec<f64>) -> Result<LinearGaussianHmm> {
        let xi = match &self.xi {
            LgXiConfig::KalmanPredictive => XiChoice::KalmanPredictive,
            LgXiConfig::Fixed { mean, cov } => XiChoice::Fixed(GaussianBelief::new(Vector2::from(*mean), matrix(cov))),
        };
        LinearGaussianHmm::new(self.model()?, observations, xi, self.proposals)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteXiConfig {
    #[default]
    Uniform,
    Predictive,
    #[serde(untagged)]
    Tables { tables: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConfig {
    pub horizon: usize,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub x0: Option<usize>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    #[serde(default)]
    pub proposals: ProposalKind,
    #[serde(default)]
    pub xi: DiscreteXiConfig,
}

impl DiscreteConfig {
    pub fn model(&self) -> Result<DiscreteModel> {
        let k = self.transition.len();
        let initial = match (&self.initial, self.x0) {
            (Some(p), None) => p.clone(),
            (None, Some(x0)) if x0 < k => {
                let mut p = vec![0.0; k];
                p[x0] = 1.0;
                p
            }
            (None, Some(x0)) => return Err(SmcError::InvalidConfig(format!("x0 = {x0} is not one of {k} states"))),
            (None, None) => vec![1.0 / k as f64; k],
            (Some(_), Some(_)) => {
                return Err(SmcError::InvalidConfig("give either x0 or initial, not both".into()))
            }
        };
        DiscreteModel::new(initial, self.transition.clone(), self.emission.clone())
    }

    pub fn hmm(&self, observations: Vec<usize>) -> Result<DiscreteHmm> {
        let xi = match &self.xi {
            DiscreteXiConfig::Uniform => DiscreteXi::Uniform,
            DiscreteXiConfig::Predictive => DiscreteXi::Predictive,
            DiscreteXiConfig::Tables { tables } => DiscreteXi::Tables(tables.clone()),
        };
        DiscreteHmm::new(self.model()?, observations, xi, self.proposals)
    }
}
