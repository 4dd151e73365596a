//! Exact Kalman filtering, Rauch–Tung–Striebel smoothing and marginal
//! likelihood for [`LinearGaussianModel`]. Serves as the reference answer for
//! the particle estimators and supplies the predictive `xi` sequence.

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::gaussian::{log_normal_1d, min_eigenvalue, symmetrize, Gaussian2};
use crate::linear_gaussian::LinearGaussianModel;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl GaussianBelief {
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Self {
        GaussianBelief { mean, cov }
    }

    pub fn predict(&self, f: &Matrix2<f64>, q: &Matrix2<f64>) -> GaussianBelief {
        GaussianBelief {
            mean: f * self.mean,
            cov: symmetrize(&(f * self.cov * f.transpose() + q)),
        }
    }

    /// Condition on a scalar observation `y ~ N(g x, r)` with the Joseph-form
    /// covariance update. Returns the posterior and `log p(y)` under the prior.
    pub fn update(&self, g: &RowVector2<f64>, r: f64, y: f64) -> Result<(GaussianBelief, f64)> {
        let s = (g * self.cov * g.transpose())[(0, 0)] + r;
        if !(s > 0.0) {
            return Err(SmcError::Numerical(format!("innovation variance {s} is not positive")));
        }
        let innovation = y - (g * self.mean)[(0, 0)];
        let gain: Vector2<f64> = self.cov * g.transpose() / s;
        let i_kg = Matrix2::identity() - gain * g;
        let cov = symmetrize(&(i_kg * self.cov * i_kg.transpose() + gain * gain.transpose() * r));
        if min_eigenvalue(&cov) < PSD_TOL {
            return Err(SmcError::Numerical(format!(
                "posterior covariance lost positive semidefiniteness: {cov:?}"
            )));
        }
        let post = GaussianBelief {
            mean: self.mean + gain * innovation,
            cov,
        };
        Ok((post, log_normal_1d(y, (g * self.mean)[(0, 0)], s)))
    }

    pub fn density(&self) -> Result<Gaussian2> {
        Gaussian2::new(&self.cov)
    }

    pub fn log_pdf(&self, x: &Vector2<f64>) -> Result<f64> {
        Ok(self.density()?.log_pdf(x, &self.mean))
    }

    pub fn is_valid(&self) -> bool {
        (self.cov - self.cov.transpose()).amax() <= SYMMETRY_TOL
            && min_eigenvalue(&self.cov) >= PSD_TOL
    }
}

/// Output of a full filter + smoother pass. Vectors are indexed by `n - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanRun {
    /// `p(x_n | y_{1:n-1})`.
    pub predicted: Vec<GaussianBelief>,
    /// `p(x_n | y_{1:n})`.
    pub filtered: Vec<GaussianBelief>,
    /// `p(x_n | y_{1:T})`.
    pub smoothed: Vec<GaussianBelief>,
    pub log_marginal_likelihood: f64,
    /// `log p(y_n | y_{1:n-1})`.
    pub per_step_log_likelihoods: Vec<f64>,
}

impl KalmanRun {
    pub fn horizon(&self) -> usize {
        self.filtered.len()
    }

    /// Predictive belief `p(x_n | y_{1:n-1})`, the artificial density used by
    /// the backward particle filter.
    pub fn xi_predictive(&self, n: usize) -> Result<GaussianBelief> {
        if n == 0 || n > self.predicted.len() {
            return Err(SmcError::TimeOutOfRange {
                n,
                lo: 1,
                hi: self.predicted.len(),
            });
        }
        Ok(self.predicted[n - 1])
    }
}

/// Incremental filter; feeding observations in several batches gives
/// bit-identical results to one batch.
#[derive(Debug, Clone)]
pub struct KalmanFilter<'a> {
    model: &'a LinearGaussianModel,
    current: GaussianBelief,
    predicted: Vec<GaussianBelief>,
    filtered: Vec<GaussianBelief>,
    per_step: Vec<f64>,
}

impl<'a> KalmanFilter<'a> {
    pub fn new(model: &'a LinearGaussianModel) -> Result<Self> {
        if !(model.r() > 0.0) {
            return Err(SmcError::InvalidModel("Kalman filter requires R > 0".into()));
        }
        Ok(KalmanFilter {
            model,
            current: GaussianBelief::new(*model.mu0(), *model.sigma0()),
            predicted: Vec::new(),
            filtered: Vec::new(),
            per_step: Vec::new(),
        })
    }

    pub fn step(&mut self, y: f64) -> Result<f64> {
        let m = self.model;
        let pred = self.current.predict(m.f(), m.q());
        let (post, ll) = pred.update(m.g(), m.r(), y)?;
        self.predicted.push(pred);
        self.filtered.push(post);
        self.per_step.push(ll);
        self.current = post;
        Ok(ll)
    }

    pub fn extend(&mut self, ys: &[f64]) -> Result<()> {
        ys.iter().try_for_each(|&y| self.step(y).map(|_| ()))
    }

    pub fn steps(&self) -> usize {
        self.filtered.len()
    }

    pub fn log_likelihood(&self) -> f64 {
        self.per_step.iter().sum()
    }

    pub fn finish(self) -> Result<KalmanRun> {
        let smoothed = rts_smooth(self.model, &self.predicted, &self.filtered)?;
        let log_marginal_likelihood = self.log_likelihood();
        Ok(KalmanRun {
            predicted: self.predicted,
            filtered: self.filtered,
            smoothed,
            log_marginal_likelihood,
            per_step_log_likelihoods: self.per_step,
        })
    }
}

pub fn kalman_filter(model: &LinearGaussianModel, ys: &[f64]) -> Result<KalmanRun> {
    let mut kf = KalmanFilter::new(model)?;
    kf.extend(ys)?;
    kf.finish()
}

/// Rauch–Tung–Striebel backward pass over a completed filter.
pub fn rts_smooth(
    model: &LinearGaussianModel,
    predicted: &[GaussianBelief],
    filtered: &[GaussianBelief],
) -> Result<Vec<GaussianBelief>> {
    let t = filtered.len();
    if t == 0 {
        return Ok(Vec::new());
    }
    let f = model.f();
    let mut smoothed = filtered.to_vec();
    for k in (0..t - 1).rev() {
        let p_pred = &predicted[k + 1].cov;
        let p_inv = p_pred
            .try_inverse()
            .or_else(|| p_pred.pseudo_inverse(1e-14).ok())
            .ok_or_else(|| SmcError::Numerical("singular predicted covariance".into()))?;
        let gain = filtered[k].cov * f.transpose() * p_inv;
        let mean = filtered[k].mean + gain * (smoothed[k + 1].mean - predicted[k + 1].mean);
        let cov = symmetrize(
            &(filtered[k].cov + gain * (smoothed[k + 1].cov - p_pred) * gain.transpose()),
        );
        smoothed[k] = GaussianBelief { mean, cov };
    }
    Ok(smoothed)
}
