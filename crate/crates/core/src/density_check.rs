//! Numerical checks that every density a model exposes integrates (or sums)
//! to one.

use nalgebra::Vector2;
use rand::Rng;

use crate::discrete::DiscreteHmm;
use crate::linear_gaussian::LinearGaussianHmm;
use crate::model::HmmModel;

/// Composite trapezoid rule for `f` on `[lo, hi]` with `points >= 2` nodes.
pub fn trapezoid_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let h = (hi - lo) / (points - 1) as f64;
    let inner: f64 = (1..points - 1).map(|k| f(lo + k as f64 * h)).sum();
    h * (inner + 0.5 * (f(lo) + f(hi)))
}

/// Tensor trapezoid rule on the rectangle `center +- half_width`.
pub fn trapezoid_2d(
    f: impl Fn(&Vector2<f64>) -> f64,
    center: &Vector2<f64>,
    half_width: &Vector2<f64>,
    points: usize,
) -> f64 {
    let lo = center - half_width;
    let h = half_width * 2.0 / (points - 1) as f64;
    let edge = |k: usize| if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
    let mut total = 0.0;
    for a in 0..points {
        for b in 0..points {
            let x = Vector2::new(lo[0] + a as f64 * h[0], lo[1] + b as f64 * h[1]);
            total += edge(a) * edge(b) * f(&x);
        }
    }
    total * h[0] * h[1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCheck {
    pub density: String,
    pub location: String,
    pub mass: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct DensityReport {
    pub checks: Vec<DensityCheck>,
}

impl DensityReport {
    fn record(&mut self, density: &str, location: String, mass: f64, tol: f64) {
        self.checks.push(DensityCheck {
            density: density.to_string(),
            location,
            mass,
            passed: (mass - 1.0).abs() <= tol,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &DensityCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Mean and spread of draws, used to place the integration box.
fn sample_box(draws: &[Vector2<f64>], width_sd: f64) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<Vector2<f64>>() / n;
    let var = draws.iter().map(|x| (x - mean).component_mul(&(x - mean))).sum::<Vector2<f64>>() / n;
    let half = var.map(|v| width_sd * v.sqrt());
    (half.min() > 1e-9).then_some((mean, half))
}

const DRAWS: usize = 4000;
const WIDTH_SD: f64 = 12.0;

/// Checks for a model with states in the plane and scalar observations:
/// `X_1`, the transition from `x_prev`, the observation law at
/// `x_prev`, and `xi_n` and every proposal at each time in `times`.
/// Integration boxes are placed from `DRAWS` samples of each density,
/// except for `xi_n`, which has no sampler and is integrated over
/// `xi_box(n)` (center, half-widths) when given.
pub fn check_planar<M, R>(
    model: &M,
    rng: &mut R,
    x_prev: &Vector2<f64>,
    times: &[usize],
    points: usize,
    tol: f64,
    xi_box: impl Fn(usize) -> Option<(Vector2<f64>, Vector2<f64>)>,
) -> DensityReport
where
    M: HmmModel<State = Vector2<f64>, Obs = f64>,
    R: Rng + ?Sized,
{
    let mut report = DensityReport::default();
    let check2 = |report: &mut DensityReport,
                      name: &str,
                      at: String,
                      draws: Vec<Vector2<f64>>,
                      log_pdf: &dyn Fn(&Vector2<f64>) -> f64| {
        if let Some((c, hw)) = sample_box(&draws, WIDTH_SD) {
            report.record(name, at, trapezoid_2d(|x| log_pdf(x).exp(), &c, &hw, points), tol);
        }
    };
    let horizon = model.horizon();

    let draws: Vec<_> = (0..DRAWS)
        .map(|_| {
            let x0 = model.sample_x0(rng);
            model.sample_transition(rng, &x0, 1)
        })
        .collect();
    check2(&mut report, "initial", "X_1".into(), draws, &|x| model.log_initial(x));

    let draws: Vec<_> = (0..DRAWS).map(|_| model.sample_transition(rng, x_prev, 2)).collect();
    check2(&mut report, "transition", format!("x_prev = {:?}", x_prev.as_slice()), draws, &|x| {
        model.log_f(x_prev, x, 2)
    });

    let ys: Vec<f64> = (0..DRAWS).map(|_| model.sample_observation(rng, x_prev, 1)).collect();
    let mean = ys.iter().sum::<f64>() / DRAWS as f64;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / DRAWS as f64).sqrt();
    if sd > 1e-9 {
        let mass = trapezoid_1d(
            |y| model.log_g(&y, x_prev, 1).exp(),
            mean - WIDTH_SD * sd,
            mean + WIDTH_SD * sd,
            points * points,
        );
        report.record("observation", format!("x = {:?}", x_prev.as_slice()), mass, tol);
    }

    for &n in times.iter().filter(|&&n| n >= 1 && n <= horizon) {
        let x_next = model.sample_backward_proposal(rng, None, horizon);
        let fwd_prev = (n > 1).then_some(x_prev);
        let bwd_next = (n < horizon).then_some(&x_next);

        let draws: Vec<_> = (0..DRAWS).map(|_| model.sample_forward_proposal(rng, fwd_prev, n)).collect();
        check2(&mut report, "forward proposal", format!("n = {n}"), draws, &|x| model.log_q_fwd(x, fwd_prev, n));

        let draws: Vec<_> = (0..DRAWS).map(|_| model.sample_backward_proposal(rng, bwd_next, n)).collect();
        check2(&mut report, "backward proposal", format!("n = {n}"), draws, &|x| {
            model.log_q_bwd(x, bwd_next, n)
        });

        if n > 1 && n < horizon {
            let draws: Vec<_> = (0..DRAWS)
                .map(|_| model.sample_combining_proposal(rng, x_prev, &x_next, n))
                .collect();
            check2(&mut report, "combining proposal", format!("n = {n}"), draws, &|x| {
                model.log_q_combine(x, x_prev, &x_next, n)
            });
        }

        if let Some((center, half)) = xi_box(n) {
            report.record(
                "xi",
                format!("n = {n}"),
                trapezoid_2d(|x| model.log_xi(x, n).exp(), &center, &half, points),
                tol,
            );
        }
    }
    report
}

/// [`check_planar`] for the linear Gaussian model, integrating each `xi_n`
/// over its own mean plus or minus twelve standard deviations.
pub fn check_linear_gaussian<R: Rng + ?Sized>(
    hmm: &LinearGaussianHmm,
    rng: &mut R,
    x_prev: &Vector2<f64>,
    times: &[usize],
    points: usize,
    tol: f64,
) -> DensityReport {
    check_planar(hmm, rng, x_prev, times, points, tol, |n| {
        let b = hmm.xi_beliefs()[n - 1];
        Some((b.mean, b.cov.diagonal().map(|v| WIDTH_SD * v.sqrt())))
    })
}

fn pmf_mass(log_p: impl Iterator<Item = f64>) -> f64 {
    log_p.map(f64::exp).sum()
}

/// Row sums of every table and proposal of a finite-state model.
pub fn check_discrete(hmm: &DiscreteHmm, tol: f64) -> DensityReport {
    let mut report = DensityReport::default();
    let model = hmm.model();
    let k = model.states();
    report.record("initial", "X_0".into(), model.initial().iter().sum(), tol);
    for (i, row) in model.transition().iter().enumerate() {
        report.record("transition", format!("row {i}"), row.iter().sum(), tol);
    }
    for (i, row) in model.emission().iter().enumerate() {
        report.record("emission", format!("row {i}"), row.iter().sum(), tol);
    }
    let horizon = hmm.horizon();
    for n in 1..=horizon {
        report.record("xi", format!("n = {n}"), hmm.xi_tables()[n - 1].iter().sum(), tol);
        for c in 0..k {
            let prev = (n > 1).then_some(&c);
            let next = (n < horizon).then_some(&c);
            report.record(
                "forward proposal",
                format!("n = {n}, state {c}"),
                pmf_mass((0..k).map(|x| hmm.log_q_fwd(&x, prev, n))),
                tol,
            );
            report.record(
                "backward proposal",
                format!("n = {n}, state {c}"),
                pmf_mass((0..k).map(|x| hmm.log_q_bwd(&x, next, n))),
                tol,
            );
            if n > 1 && n < horizon {
                for d in 0..k {
                    report.record(
                        "combining proposal",
                        format!("n = {n}, states ({c}, {d})"),
                        pmf_mass((0..k).map(|x| hmm.log_q_combine(&x, &c, &d, n))),
                        tol,
                    );
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::log_normal_1d;

    #[test]
    fn standard_normal_mass() {
        let mass = trapezoid_1d(|x| log_normal_1d(x, 0.0, 1.0).exp(), -10.0, 10.0, 10_000);
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn plain_row_sums_to_one() {
        let row = [0.5, 0.3, 0.2];
        assert_eq!(row.iter().sum::<f64>(), 1.0);
    }
}
