#![allow(dead_code)]

use tfsmc::{simulate, DiscreteHmm, DiscreteModel, DiscreteXi, LinearGaussianHmm, LinearGaussianModel, ProposalKind, RngStream, XiChoice};

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Asserts that `exp(log_estimates - log_exact)` averages to one within three
/// standard errors.
pub fn assert_unbiased(label: &str, log_estimates: &[f64], log_exact: f64) {
    let ratios: Vec<f64> = log_estimates.iter().map(|l| (l - log_exact).exp()).collect();
    let (mean, se) = mean_se(&ratios);
    assert!(
        (mean - 1.0).abs() <= 3.0 * se + 1e-12,
        "{label}: mean ratio {mean:.5} is {:.2} standard errors from 1 (se {se:.5})",
        (mean - 1.0) / se
    );
}

pub fn random_discrete(seed: u64, states: usize, symbols: usize, horizon: usize, xi: DiscreteXi) -> DiscreteHmm {
    let mut rng = RngStream::new(seed, 0);
    let model = DiscreteModel::random(&mut rng, states, symbols).unwrap();
    let traj = simulate(&model, &mut rng, horizon).unwrap();
    DiscreteHmm::new(model, traj.observations, xi, ProposalKind::Adapted).unwrap()
}

pub fn tracking_hmm(nu2: f64, tau2: f64, horizon: usize, seed: u64) -> LinearGaussianHmm {
    let model = LinearGaussianModel::tracking(nu2, tau2).unwrap();
    let traj = simulate(&model, &mut RngStream::new(seed, 0), horizon).unwrap();
    LinearGaussianHmm::new(model, traj.observations, XiChoice::KalmanPredictive, ProposalKind::Adapted).unwrap()
}
