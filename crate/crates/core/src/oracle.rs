//! Exact answers for small finite-state models: the forward recursion,
//! forward-backward smoothing, the backward constants that depend on `xi`,
//! and exhaustive path enumeration to check all three.
//!
//! Everything is computed in plain probability space. Inputs are limited to
//! `K <= 10` states and `T <= 20` steps, and intermediate results are checked
//! against underflow.

use crate::discrete::DiscreteHmm;
use crate::error::{Result, SmcError};
use crate::model::HmmModel;

pub const MAX_STATES: usize = 10;
pub const MAX_HORIZON: usize = 20;
const MAX_PATHS: usize = 20_000_000;
const TINY: f64 = 1e-290;

fn check_size(hmm: &DiscreteHmm) -> Result<()> {
    let (k, t) = (hmm.model().states(), hmm.horizon());
    if k > MAX_STATES || t > MAX_HORIZON {
        return Err(SmcError::OracleLimit(format!(
            "{k} states over {t} steps exceeds {MAX_STATES} x {MAX_HORIZON}"
        )));
    }
    Ok(())
}

fn check_magnitude(v: f64, what: &str) -> Result<f64> {
    if v != 0.0 && v < TINY {
        return Err(SmcError::OracleLimit(format!("{what} = {v:e} is too small for plain arithmetic")));
    }
    Ok(v)
}

fn emission(hmm: &DiscreteHmm, x: usize, n: usize) -> f64 {
    hmm.model().emission()[x][*hmm.observation(n)]
}

/// Unnormalized forward messages `alpha_n(x) = p(x_n = x, y_{1:n})`, `n = 1..=T`.
fn alphas(hmm: &DiscreteHmm) -> Result<Vec<Vec<f64>>> {
    let model = hmm.model();
    let k = model.states();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(hmm.horizon());
    out.push((0..k).map(|x| model.first()[x] * emission(hmm, x, 1)).collect());
    for n in 2..=hmm.horizon() {
        let prev = &out[n - 2];
        let a: Vec<f64> = (0..k)
            .map(|x| (0..k).map(|xp| prev[xp] * model.transition()[xp][x]).sum::<f64>() * emission(hmm, x, n))
            .collect();
        check_magnitude(a.iter().sum(), "forward message mass")?;
        out.push(a);
    }
    Ok(out)
}

/// `beta_n(x) = p(y_{n+1:T} | x_n = x)`, `n = 1..=T`.
fn betas(hmm: &DiscreteHmm) -> Result<Vec<Vec<f64>>> {
    let model = hmm.model();
    let (k, horizon) = (model.states(), hmm.horizon());
    let mut out = vec![vec![1.0; k]; horizon];
    for n in (1..horizon).rev() {
        let b: Vec<f64> = (0..k)
            .map(|x| {
                (0..k)
                    .map(|xn| model.transition()[x][xn] * emission(hmm, xn, n + 1) * out[n][xn])
                    .sum()
            })
            .collect();
        check_magnitude(b.iter().sum(), "backward message mass")?;
        out[n - 1] = b;
    }
    Ok(out)
}

/// `p(y_{1:T})` by the forward recursion.
pub fn exact_likelihood(hmm: &DiscreteHmm) -> Result<f64> {
    check_size(hmm)?;
    let a = alphas(hmm)?;
    check_magnitude(a[a.len() - 1].iter().sum(), "likelihood")
}

/// `P(X_t = . | y_{1:T})`.
pub fn exact_smoothed_marginal(hmm: &DiscreteHmm, t: usize) -> Result<Vec<f64>> {
    check_size(hmm)?;
    if t < 1 || t > hmm.horizon() {
        return Err(SmcError::TimeOutOfRange { n: t, lo: 1, hi: hmm.horizon() });
    }
    let (a, b) = (alphas(hmm)?, betas(hmm)?);
    let joint: Vec<f64> = a[t - 1].iter().zip(&b[t - 1]).map(|(x, y)| x * y).collect();
    let s: f64 = joint.iter().sum();
    if !(s > 0.0) {
        return Err(SmcError::InvalidModel("observations have zero probability".into()));
    }
    Ok(joint.into_iter().map(|v| v / s).collect())
}

/// `p~(y_{n:T}) = sum xi_n(x_n) g(y_n | x_n) prod_{k > n} f(x_k | x_{k-1}) g(y_k | x_k)`
/// using the `xi` tables carried by `hmm`.
pub fn exact_backward_nc(hmm: &DiscreteHmm, n_stop: usize) -> Result<f64> {
    check_size(hmm)?;
    if n_stop < 1 || n_stop > hmm.horizon() {
        return Err(SmcError::TimeOutOfRange { n: n_stop, lo: 1, hi: hmm.horizon() });
    }
    let b = betas(hmm)?;
    let xi = &hmm.xi_tables()[n_stop - 1];
    let v = (0..hmm.model().states())
        .map(|x| xi[x] * emission(hmm, x, n_stop) * b[n_stop - 1][x])
        .sum();
    check_magnitude(v, "backward constant")
}

fn enumerate_paths(k: usize, len: usize, mut visit: impl FnMut(&[usize])) -> Result<()> {
    let count = k.checked_pow(len as u32).filter(|&c| c <= MAX_PATHS);
    if count.is_none() {
        return Err(SmcError::OracleLimit(format!("{k}^{len} paths is too many to enumerate")));
    }
    let mut path = vec![0; len];
    loop {
        visit(&path);
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
        }
    }
}

fn path_weight(hmm: &DiscreteHmm, path: &[usize], start: usize, first: f64) -> f64 {
    let model = hmm.model();
    let mut w = first * emission(hmm, path[0], start);
    for (offset, pair) in path.windows(2).enumerate() {
        w *= model.transition()[pair[0]][pair[1]] * emission(hmm, pair[1], start + offset + 1);
    }
    w
}

/// `p(y_{1:T})` summed over all `K^T` paths.
pub fn exhaustive_likelihood(hmm: &DiscreteHmm) -> Result<f64> {
    let first = hmm.model().first();
    let mut total = 0.0;
    enumerate_paths(hmm.model().states(), hmm.horizon(), |p| {
        total += path_weight(hmm, p, 1, first[p[0]]);
    })?;
    Ok(total)
}

/// `P(X_t = . | y_{1:T})` by enumeration.
pub fn exhaustive_smoothed_marginal(hmm: &DiscreteHmm, t: usize) -> Result<Vec<f64>> {
    let first = hmm.model().first();
    let mut mass = vec![0.0; hmm.model().states()];
    enumerate_paths(hmm.model().states(), hmm.horizon(), |p| {
        mass[p[t - 1]] += path_weight(hmm, p, 1, first[p[0]]);
    })?;
    let s: f64 = mass.iter().sum();
    Ok(mass.into_iter().map(|v| v / s).collect())
}

/// Backward constant from `n_stop` by enumeration over `x_{n_stop:T}`.
pub fn exhaustive_backward_nc(hmm: &DiscreteHmm, n_stop: usize) -> Result<f64> {
    let xi = &hmm.xi_tables()[n_stop - 1];
    let mut total = 0.0;
    enumerate_paths(hmm.model().states(), hmm.horizon() + 1 - n_stop, |p| {
        total += path_weight(hmm, p, n_stop, xi[p[0]]);
    })?;
    Ok(total)
}

/// Exact `E[phi(X_t) | y_{1:T}]`.
pub fn exact_smoothed_expectation(hmm: &DiscreteHmm, t: usize, phi: impl Fn(usize) -> f64) -> Result<f64> {
    Ok(exact_smoothed_marginal(hmm, t)?
        .iter()
        .enumerate()
        .map(|(x, p)| p * phi(x))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{DiscreteModel, DiscreteXi};
    use crate::model::ProposalKind;

    fn hmm(transition: Vec<Vec<f64>>, emission: Vec<Vec<f64>>, ys: Vec<usize>) -> DiscreteHmm {
        let k = transition.len();
        let m = DiscreteModel::new(vec![1.0 / k as f64; k], transition, emission).unwrap();
        DiscreteHmm::new(m, ys, DiscreteXi::Uniform, ProposalKind::Adapted).unwrap()
    }

    #[test]
    fn single_state_is_product_of_emissions() {
        let h = hmm(vec![vec![1.0]], vec![vec![0.2, 0.3, 0.5]], vec![0, 2, 2, 1]);
        let want = 0.2 * 0.5 * 0.5 * 0.3;
        assert!((exact_likelihood(&h).unwrap() - want).abs() < 1e-15);
        assert_eq!(exact_smoothed_marginal(&h, 3).unwrap(), vec![1.0]);
    }

    #[test]
    fn state_independent_emissions() {
        let t = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let e = vec![vec![0.25, 0.75]; 2];
        let h = hmm(t, e, vec![1, 0, 1]);
        assert!((exact_likelihood(&h).unwrap() - 0.75 * 0.25 * 0.75).abs() < 1e-15);
        // Smoothed marginal is the prior marginal; with a uniform start and
        // this chain, P(X_1) = (0.55, 0.45), P(X_2) = (0.565, 0.435).
        let s = exact_smoothed_marginal(&h, 2).unwrap();
        assert!((s[0] - 0.565).abs() < 1e-12);
        // Backward constant with uniform xi: (1/2) sum_x g(y_3) = 0.75.
        assert!((exact_backward_nc(&h, 3).unwrap() - 0.75).abs() < 1e-15);
        assert!((exact_backward_nc(&h, 1).unwrap() - 0.75 * 0.25 * 0.75).abs() < 1e-15);
    }

    #[test]
    fn size_limits_enforced() {
        let h = hmm(vec![vec![1.0]], vec![vec![1.0]], vec![0; 21]);
        assert!(matches!(exact_likelihood(&h), Err(SmcError::OracleLimit(_))));
    }

    #[test]
    fn path_enumeration_counts() {
        let mut count = 0;
        enumerate_paths(3, 4, |_| count += 1).unwrap();
        assert_eq!(count, 81);
    }
}
