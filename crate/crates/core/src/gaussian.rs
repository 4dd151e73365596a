//! Two-dimensional Gaussian helpers on stack-allocated nalgebra types.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SmcError};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `(C + C^T) / 2`.
pub fn symmetrize(c: &Matrix2<f64>) -> Matrix2<f64> {
    (c + c.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `c`.
pub fn min_eigenvalue(c: &Matrix2<f64>) -> f64 {
    let s = symmetrize(c);
    let half_tr = 0.5 * (s[(0, 0)] + s[(1, 1)]);
    let half_diff = 0.5 * (s[(0, 0)] - s[(1, 1)]);
    half_tr - (half_diff * half_diff + s[(0, 1)] * s[(0, 1)]).sqrt()
}

/// Symmetric square root-like factor `L` with `L L^T = c` for PSD `c`,
/// tolerating singular matrices.
pub fn psd_factor(c: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let s = symmetrize(c);
    if let Some(ch) = s.cholesky() {
        return Ok(ch.l());
    }
    let eig = s.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(SmcError::InvalidModel(format!(
            "covariance is not positive semidefinite: {s:?}"
        )));
    }
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(eig.eigenvectors * d)
}

pub fn standard_normal2<R: Rng + ?Sized>(rng: &mut R) -> Vector2<f64> {
    Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Log-density of `N(mean, var)` at `x`; a point mass when `var == 0`.
pub fn log_normal_1d(x: f64, mean: f64, var: f64) -> f64 {
    if var == 0.0 {
        return if x == mean { 0.0 } else { f64::NEG_INFINITY };
    }
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Shape of a bivariate normal: its covariance factor and normalizing constant.
/// A zero covariance is a point mass (density 1 w.r.t. counting measure at the mean).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gaussian2 {
    PointMass,
    Full { chol: Matrix2<f64>, log_norm: f64 },
}

impl Gaussian2 {
    pub fn new(cov: &Matrix2<f64>) -> Result<Self> {
        if cov.iter().all(|&c| c == 0.0) {
            return Ok(Gaussian2::PointMass);
        }
        let chol = symmetrize(cov).cholesky().ok_or_else(|| {
            SmcError::InvalidModel(format!("covariance is not positive definite: {cov:?}"))
        })?;
        let l = chol.l();
        let log_norm = -LN_2PI - l[(0, 0)].ln() - l[(1, 1)].ln();
        Ok(Gaussian2::Full { chol: l, log_norm })
    }

    pub fn log_pdf(&self, x: &Vector2<f64>, mean: &Vector2<f64>) -> f64 {
        match self {
            Gaussian2::PointMass => {
                if x == mean {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Gaussian2::Full { chol, log_norm } => {
                let d = x - mean;
                let z0 = d[0] / chol[(0, 0)];
                let z1 = (d[1] - chol[(1, 0)] * z0) / chol[(1, 1)];
                log_norm - 0.5 * (z0 * z0 + z1 * z1)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, mean: &Vector2<f64>) -> Vector2<f64> {
        match self {
            Gaussian2::PointMass => *mean,
            Gaussian2::Full { chol, .. } => mean + chol * standard_normal2(rng),
        }
    }

    /// `log sup_x N(x; m, C)`.
    pub fn log_peak(&self) -> f64 {
        match self {
            Gaussian2::PointMass => 0.0,
            Gaussian2::Full { log_norm, .. } => *log_norm,
        }
    }
}

/// Affine-Gaussian kernel `x ~ N(a u + b, C)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AffineKernel {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub noise: Gaussian2,
}

impl AffineKernel {
    pub fn mean(&self, u: &Vector2<f64>) -> Vector2<f64> {
        self.a * u + self.b
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, u: &Vector2<f64>) -> Vector2<f64> {
        self.noise.sample(rng, &self.mean(u))
    }

    pub fn log_pdf(&self, x: &Vector2<f64>, u: &Vector2<f64>) -> f64 {
        self.noise.log_pdf(x, &self.mean(u))
    }
}
