//! Brute-force filtering and smoothing for the two-dimensional linear
//! Gaussian model on a lattice `h Z^2`. Densities are tabulated on the
//! lattice, the transition is applied as a discrete convolution built from
//! [`StateSpaceModel::log_f`], and observation densities come from
//! [`StateSpaceModel::log_g`]. The lattice is closed under
//! `F = [[1,1],[0,1]]`, so no interpolation is ever needed.
//!
//! This is slow and only meant as a reference for short horizons.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Result, SmcError};
use crate::gaussian::min_eigenvalue;
use crate::linear_gaussian::LinearGaussianModel;
use crate::model::StateSpaceModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Lattice spacing `h`.
    pub spacing: f64,
    /// Half-width, in standard deviations, of tabulated Gaussians.
    pub width_sd: f64,
    /// Cells below this fraction of the largest cell are dropped.
    pub rel_threshold: f64,
}

impl QuadratureOptions {
    /// Spacing at 0.6 of the narrowest transition-noise standard deviation.
    pub fn for_model(model: &LinearGaussianModel) -> Self {
        QuadratureOptions {
            spacing: 0.6 * min_eigenvalue(model.q()).max(0.0).sqrt(),
            width_sd: 9.0,
            rel_threshold: 1e-22,
        }
    }
}

/// A density tabulated on the cells `(i, j)` of a rectangle, where cell
/// `(i, j)` is the point `(i h, j h)`. Values are probabilities of cells.
#[derive(Debug, Clone)]
struct Table {
    i0: i64,
    j0: i64,
    ni: usize,
    nj: usize,
    mass: Vec<f64>,
}

impl Table {
    fn zeros(i0: i64, i1: i64, j0: i64, j1: i64) -> Self {
        let ni = (i1 - i0 + 1) as usize;
        let nj = (j1 - j0 + 1) as usize;
        Table { i0, j0, ni, nj, mass: vec![0.0; ni * nj] }
    }

    fn cells(&self) -> impl Iterator<Item = (i64, i64, usize)> + '_ {
        (0..self.ni).flat_map(move |a| (0..self.nj).map(move |b| (self.i0 + a as i64, self.j0 + b as i64, a * self.nj + b)))
    }

    fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Restrict to the bounding box of cells above `rel * max`.
    fn trim(&self, rel: f64) -> Table {
        let max = self.mass.iter().copied().fold(0.0, f64::max);
        let cut = max * rel;
        let (mut ilo, mut ihi, mut jlo, mut jhi) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
        for (i, j, k) in self.cells() {
            if self.mass[k] > cut {
                ilo = ilo.min(i);
                ihi = ihi.max(i);
                jlo = jlo.min(j);
                jhi = jhi.max(j);
            }
        }
        let mut out = Table::zeros(ilo, ihi, jlo, jhi);
        for (i, j, k) in out.cells().collect::<Vec<_>>() {
            out.mass[k] = self.get(i, j);
        }
        out
    }

    fn get(&self, i: i64, j: i64) -> f64 {
        let (a, b) = (i - self.i0, j - self.j0);
        if a < 0 || b < 0 || a >= self.ni as i64 || b >= self.nj as i64 {
            0.0
        } else {
            self.mass[a as usize * self.nj + b as usize]
        }
    }

    fn moments(&self, h: f64) -> (Vector2<f64>, Matrix2<f64>) {
        let total = self.total();
        let mut m = Vector2::zeros();
        for (i, j, k) in self.cells() {
            m += Vector2::new(i as f64 * h, j as f64 * h) * self.mass[k];
        }
        m /= total;
        let mut c = Matrix2::zeros();
        for (i, j, k) in self.cells() {
            let d = Vector2::new(i as f64 * h, j as f64 * h) - m;
            c += d * d.transpose() * self.mass[k];
        }
        (m, c / total)
    }
}

#[derive(Debug, Clone)]
pub struct QuadratureRun {
    pub log_marginal_likelihood: f64,
    /// Moments of `p(x_n | y_{1:n-1})`, `n = 1..=T`.
    pub predicted: Vec<(Vector2<f64>, Matrix2<f64>)>,
    pub filtered: Vec<(Vector2<f64>, Matrix2<f64>)>,
    pub smoothed: Vec<(Vector2<f64>, Matrix2<f64>)>,
}

fn point(i: i64, j: i64, h: f64) -> Vector2<f64> {
    Vector2::new(i as f64 * h, j as f64 * h)
}

fn span(mean: f64, var: f64, width: f64, h: f64) -> (i64, i64) {
    let half = width * var.sqrt();
    (((mean - half) / h).floor() as i64, ((mean + half) / h).ceil() as i64)
}

/// Filter and smooth `ys` on the lattice; requires `F = [[1,1],[0,1]]`.
pub fn quadrature_smoother(model: &LinearGaussianModel, ys: &[f64], opts: &QuadratureOptions) -> Result<QuadratureRun> {
    if *model.f() != Matrix2::new(1.0, 1.0, 0.0, 1.0) {
        return Err(SmcError::InvalidModel("lattice quadrature needs F = [[1,1],[0,1]]".into()));
    }
    if ys.is_empty() || !(opts.spacing > 0.0) {
        return Err(SmcError::InvalidConfig("quadrature needs observations and a positive spacing".into()));
    }
    let h = opts.spacing;
    let cell = h * h;

    // Transition kernel offsets (a, b) with weight f(x' = (a h, b h) | 0) h^2.
    let q = model.q();
    let (a_lo, a_hi) = span(0.0, q[(0, 0)], opts.width_sd, h);
    let (b_lo, b_hi) = span(0.0, q[(1, 1)], opts.width_sd, h);
    let origin = Vector2::zeros();
    let mut kernel = Vec::new();
    let mut peak = 0.0f64;
    for a in a_lo..=a_hi {
        for b in b_lo..=b_hi {
            let w = model.log_f(&origin, &point(a, b, h), 2).exp() * cell;
            peak = peak.max(w);
            kernel.push((a, b, w));
        }
    }
    kernel.retain(|&(_, _, w)| w > peak * opts.rel_threshold);

    // Law of X_1.
    let first = model.initial_belief();
    let (i_lo, i_hi) = span(first.mean[0], first.cov[(0, 0)], opts.width_sd, h);
    let (j_lo, j_hi) = span(first.mean[1], first.cov[(1, 1)], opts.width_sd, h);
    let mut pred = Table::zeros(i_lo, i_hi, j_lo, j_hi);
    for (i, j, k) in pred.cells().collect::<Vec<_>>() {
        pred.mass[k] = model.log_initial(&point(i, j, h)).exp() * cell;
    }

    let mut log_lik = 0.0;
    let mut predicted = Vec::with_capacity(ys.len());
    let mut filters: Vec<Table> = Vec::with_capacity(ys.len());
    let mut scales = Vec::with_capacity(ys.len());
    for (idx, y) in ys.iter().enumerate() {
        let n = idx + 1;
        predicted.push(pred.moments(h));
        let mut filt = pred.clone();
        for (i, j, k) in pred.cells() {
            filt.mass[k] *= model.log_g(y, &point(i, j, h), n).exp();
        }
        let c = filt.total();
        if !(c > 0.0) {
            return Err(SmcError::Numerical(format!("quadrature lost all mass at time {n}")));
        }
        log_lik += c.ln();
        filt.mass.iter_mut().for_each(|m| *m /= c);
        let filt = filt.trim(opts.rel_threshold);
        scales.push(c);
        if n < ys.len() {
            pred = propagate(&filt, &kernel);
        }
        filters.push(filt);
    }

    // Backward messages on each filter table.
    let horizon = ys.len();
    let mut betas: Vec<Table> = vec![Table::zeros(0, 0, 0, 0); horizon];
    let mut last = filters[horizon - 1].clone();
    last.mass.iter_mut().for_each(|m| *m = 1.0);
    betas[horizon - 1] = last;
    for n in (1..horizon).rev() {
        let next = &filters[n];
        let mut gamma = betas[n].clone();
        for (i, j, k) in next.cells() {
            gamma.mass[k] *= model.log_g(&ys[n], &point(i, j, h), n + 1).exp() / scales[n];
        }
        let mut beta = filters[n - 1].clone();
        for (i, j, k) in filters[n - 1].cells().collect::<Vec<_>>() {
            let (fi, fj) = (i + j, j);
            beta.mass[k] = kernel.iter().map(|&(a, b, w)| w * gamma.get(fi + a, fj + b)).sum();
        }
        betas[n - 1] = beta;
    }

    let filtered = filters.iter().map(|t| t.moments(h)).collect();
    let smoothed = filters
        .iter()
        .zip(&betas)
        .map(|(f, b)| {
            let mut s = f.clone();
            s.mass.iter_mut().zip(&b.mass).for_each(|(m, w)| *m *= w);
            s.moments(h)
        })
        .collect();
    Ok(QuadratureRun {
        log_marginal_likelihood: log_lik,
        predicted,
        filtered,
        smoothed,
    })
}

fn propagate(filt: &Table, kernel: &[(i64, i64, f64)]) -> Table {
    let (a_lo, a_hi) = kernel.iter().fold((i64::MAX, i64::MIN), |(l, u), &(a, _, _)| (l.min(a), u.max(a)));
    let (b_lo, b_hi) = kernel.iter().fold((i64::MAX, i64::MIN), |(l, u), &(_, b, _)| (l.min(b), u.max(b)));
    let i_lo = filt.i0 + filt.j0 + a_lo;
    let i_hi = filt.i0 + filt.ni as i64 - 1 + filt.j0 + filt.nj as i64 - 1 + a_hi;
    let j_lo = filt.j0 + b_lo;
    let j_hi = filt.j0 + filt.nj as i64 - 1 + b_hi;
    let mut out = Table::zeros(i_lo, i_hi, j_lo, j_hi);
    for (i, j, k) in filt.cells() {
        let m = filt.mass[k];
        if m == 0.0 {
            continue;
        }
        let base_i = (i + j - i_lo) as usize;
        let base_j = (j - j_lo) as usize;
        for &(a, b, w) in kernel {
            let ti = (base_i as i64 + a) as usize;
            let tj = (base_j as i64 + b) as usize;
            out.mass[ti * out.nj + tj] += m * w;
        }
    }
    out
}
