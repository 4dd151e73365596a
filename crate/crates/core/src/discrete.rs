//! Finite-state hidden Markov models with categorical emissions. Densities
//! are probability mass functions, so the same filters run unchanged and the
//! exact answers in [`crate::oracle`] are available for comparison.

use rand::Rng;

use crate::error::{Result, SmcError};
use crate::model::{HmmModel, ProposalKind, StateSpaceModel};
use crate::particles::Categorical;

const ROW_TOL: f64 = 1e-12;

fn check_pmf(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(SmcError::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(SmcError::InvalidModel(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn normalized(row: &[f64]) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    row.iter().map(|p| p / s).collect()
}

fn ln_table(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect()
}

/// `X_0 ~ initial`, `P(X_n = j | X_{n-1} = i) = transition[i][j]`,
/// `P(Y_n = m | X_n = k) = emission[k][m]`.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
    /// Law of `X_1`.
    first: Vec<f64>,
    log_first: Vec<f64>,
    log_transition: Vec<Vec<f64>>,
    log_emission: Vec<Vec<f64>>,
    initial_sampler: Categorical,
    transition_samplers: Vec<Categorical>,
    emission_samplers: Vec<Categorical>,
}

impl DiscreteModel {
    pub fn new(initial: Vec<f64>, transition: Vec<Vec<f64>>, emission: Vec<Vec<f64>>) -> Result<Self> {
        let k = initial.len();
        if k == 0 {
            return Err(SmcError::InvalidModel("state space is empty".into()));
        }
        check_pmf(&initial, "initial distribution")?;
        if transition.len() != k || transition.iter().any(|r| r.len() != k) {
            return Err(SmcError::InvalidModel(format!("transition matrix must be {k}x{k}")));
        }
        for (i, row) in transition.iter().enumerate() {
            check_pmf(row, &format!("transition row {i}"))?;
        }
        if emission.len() != k {
            return Err(SmcError::InvalidModel(format!("emission table needs {k} rows")));
        }
        let m = emission[0].len();
        if m == 0 || emission.iter().any(|r| r.len() != m) {
            return Err(SmcError::InvalidModel("emission rows must share a nonzero length".into()));
        }
        for (i, row) in emission.iter().enumerate() {
            check_pmf(row, &format!("emission row {i}"))?;
        }
        let first: Vec<f64> = (0..k)
            .map(|j| (0..k).map(|i| initial[i] * transition[i][j]).sum())
            .collect();
        let sampler = |row: &Vec<f64>| Categorical::from_weights(row.iter().copied()).expect("checked pmf");
        Ok(DiscreteModel {
            initial_sampler: sampler(&initial),
            transition_samplers: transition.iter().map(sampler).collect(),
            emission_samplers: emission.iter().map(sampler).collect(),
            log_first: first.iter().map(|p| p.ln()).collect(),
            log_transition: ln_table(&transition),
            log_emission: ln_table(&emission),
            first,
            initial,
            transition,
            emission,
        })
    }

    /// Random instance with `k` states and `m` symbols. Entries are drawn
    /// uniformly from `[0.05, 1]` before row normalization, so every
    /// probability is positive.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, k: usize, m: usize) -> Result<Self> {
        let mut row = |len: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
            normalized(&raw)
        };
        let initial = row(k);
        let transition = (0..k).map(|_| row(k)).collect();
        let emission = (0..k).map(|_| row(m)).collect();
        Self::new(initial, transition, emission)
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn symbols(&self) -> usize {
        self.emission[0].len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Law of `X_1`.
    pub fn first(&self) -> &[f64] {
        &self.first
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emission(&self) -> &[Vec<f64>] {
        &self.emission
    }
}

impl StateSpaceModel for DiscreteModel {
    type State = usize;
    type Obs = usize;

    fn state_dim(&self) -> usize {
        1
    }

    fn sample_x0<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.initial_sampler.sample(rng)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, rng: &mut R, x_prev: &usize, _n: usize) -> usize {
        self.transition_samplers[*x_prev].sample(rng)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, rng: &mut R, x: &usize, _n: usize) -> usize {
        self.emission_samplers[*x].sample(rng)
    }

    fn log_initial(&self, x: &usize) -> f64 {
        self.log_first[*x]
    }

    fn log_f(&self, x_prev: &usize, x: &usize, _n: usize) -> f64 {
        self.log_transition[*x_prev][*x]
    }

    fn log_g(&self, y: &usize, x: &usize, _n: usize) -> f64 {
        self.log_emission[*x][*y]
    }

    fn log_f_bound(&self) -> Option<f64> {
        let max = self
            .transition
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max);
        Some(max.ln())
    }
}

/// Artificial pmfs `xi_n` for the backward filter.
#[derive(Debug, Clone)]
pub enum DiscreteXi {
    Uniform,
    /// Exact predictive `P(X_n = . | y_{1:n-1})`.
    Predictive,
    /// One pmf per time `n = 1..=T`.
    Tables(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
struct TablePmf {
    log_p: Vec<f64>,
    sampler: Categorical,
}

impl TablePmf {
    /// Normalizes `weights`; falls back to `fallback` when they are all zero.
    fn new(weights: Vec<f64>, fallback: &[f64]) -> Self {
        let s: f64 = weights.iter().sum();
        let p = if s > 0.0 { normalized(&weights) } else { fallback.to_vec() };
        TablePmf {
            log_p: p.iter().map(|v| v.ln()).collect(),
            sampler: Categorical::from_weights(p).expect("positive mass"),
        }
    }
}

/// Finite-state model conditioned on observations.
#[derive(Debug, Clone)]
pub struct DiscreteHmm {
    model: DiscreteModel,
    observations: Vec<usize>,
    proposals: ProposalKind,
    xi: Vec<Vec<f64>>,
    log_xi: Vec<Vec<f64>>,
    fwd_first: TablePmf,
    /// `fwd[n - 2][x_prev]` for `n = 2..=T`.
    fwd: Vec<Vec<TablePmf>>,
    bwd_last: TablePmf,
    /// `bwd[n - 1][x_next]` for `n = 1..T`.
    bwd: Vec<Vec<TablePmf>>,
}

impl DiscreteHmm {
    pub fn new(model: DiscreteModel, observations: Vec<usize>, xi: DiscreteXi, proposals: ProposalKind) -> Result<Self> {
        let horizon = observations.len();
        let k = model.states();
        if horizon == 0 {
            return Err(SmcError::InvalidModel("no observations".into()));
        }
        if let Some(y) = observations.iter().find(|&&y| y >= model.symbols()) {
            return Err(SmcError::InvalidModel(format!(
                "observation {y} outside the {}-symbol alphabet",
                model.symbols()
            )));
        }
        let xi = match xi {
            DiscreteXi::Uniform => vec![vec![1.0 / k as f64; k]; horizon],
            DiscreteXi::Predictive => exact_predictive(&model, &observations)?,
            DiscreteXi::Tables(t) => {
                if t.len() != horizon || t.iter().any(|r| r.len() != k) {
                    return Err(SmcError::InvalidModel(format!("xi tables must be {horizon}x{k}")));
                }
                t
            }
        };
        for (n, row) in xi.iter().enumerate() {
            check_pmf(row, &format!("xi at time {}", n + 1))?;
        }

        let (p, e) = (&model.transition, &model.emission);
        let y = &observations;
        let adapted = proposals == ProposalKind::Adapted;
        let fwd_first = if adapted {
            TablePmf::new((0..k).map(|x| model.first[x] * e[x][y[0]]).collect(), &model.first)
        } else {
            TablePmf::new(model.first.clone(), &model.first)
        };
        let fwd = (2..=horizon)
            .map(|n| {
                (0..k)
                    .map(|xp| {
                        let w = (0..k)
                            .map(|x| if adapted { p[xp][x] * e[x][y[n - 1]] } else { p[xp][x] })
                            .collect();
                        TablePmf::new(w, &p[xp])
                    })
                    .collect()
            })
            .collect();
        let bwd_last = if adapted {
            TablePmf::new((0..k).map(|x| xi[horizon - 1][x] * e[x][y[horizon - 1]]).collect(), &xi[horizon - 1])
        } else {
            TablePmf::new(xi[horizon - 1].clone(), &xi[horizon - 1])
        };
        let bwd = (1..horizon)
            .map(|n| {
                (0..k)
                    .map(|xn| {
                        let w = (0..k)
                            .map(|x| {
                                if adapted {
                                    xi[n - 1][x] * e[x][y[n - 1]] * p[x][xn]
                                } else {
                                    xi[n - 1][x]
                                }
                            })
                            .collect();
                        TablePmf::new(w, &xi[n - 1])
                    })
                    .collect()
            })
            .collect();

        Ok(DiscreteHmm {
            log_xi: ln_table(&xi),
            xi,
            fwd_first,
            fwd,
            bwd_last,
            bwd,
            model,
            observations,
            proposals,
        })
    }

    pub fn model(&self) -> &DiscreteModel {
        &self.model
    }

    pub fn proposals(&self) -> ProposalKind {
        self.proposals
    }

    /// `xi[n - 1]` is the pmf `xi_n`.
    pub fn xi_tables(&self) -> &[Vec<f64>] {
        &self.xi
    }

    fn combine_weights(&self, x_prev: usize, x_next: usize, n: usize) -> Vec<f64> {
        let (p, e) = (&self.model.transition, &self.model.emission);
        let y = self.observations[n - 1];
        (0..self.model.states())
            .map(|x| match self.proposals {
                ProposalKind::Adapted => p[x_prev][x] * e[x][y] * p[x][x_next],
                ProposalKind::Prior => p[x_prev][x],
            })
            .collect()
    }

    fn combine_pmf(&self, x_prev: usize, x_next: usize, n: usize) -> TablePmf {
        TablePmf::new(self.combine_weights(x_prev, x_next, n), &self.model.transition[x_prev])
    }
}

/// `P(X_n = . | y_{1:n-1})` for `n = 1..=T` by the normalized forward recursion.
pub fn exact_predictive(model: &DiscreteModel, observations: &[usize]) -> Result<Vec<Vec<f64>>> {
    let k = model.states();
    let mut out = Vec::with_capacity(observations.len());
    let mut pred = model.first.clone();
    for (n, &y) in observations.iter().enumerate() {
        out.push(pred.clone());
        let filt: Vec<f64> = (0..k).map(|x| pred[x] * model.emission[x][y]).collect();
        let s: f64 = filt.iter().sum();
        if !(s > 0.0) {
            return Err(SmcError::InvalidModel(format!("observation at time {} has zero probability", n + 1)));
        }
        pred = (0..k)
            .map(|j| (0..k).map(|i| filt[i] / s * model.transition[i][j]).sum())
            .collect();
    }
    Ok(out)
}

impl StateSpaceModel for DiscreteHmm {
    type State = usize;
    type Obs = usize;

    fn state_dim(&self) -> usize {
        1
    }
    fn sample_x0<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.model.sample_x0(rng)
    }
    fn sample_transition<R: Rng + ?Sized>(&self, rng: &mut R, x_prev: &usize, n: usize) -> usize {
        self.model.sample_transition(rng, x_prev, n)
    }
    fn sample_observation<R: Rng + ?Sized>(&self, rng: &mut R, x: &usize, n: usize) -> usize {
        self.model.sample_observation(rng, x, n)
    }
    fn log_initial(&self, x: &usize) -> f64 {
        self.model.log_initial(x)
    }
    fn log_f(&self, x_prev: &usize, x: &usize, n: usize) -> f64 {
        self.model.log_f(x_prev, x, n)
    }
    fn log_g(&self, y: &usize, x: &usize, n: usize) -> f64 {
        self.model.log_g(y, x, n)
    }
    fn log_f_bound(&self) -> Option<f64> {
        self.model.log_f_bound()
    }
}

impl HmmModel for DiscreteHmm {
    fn observations(&self) -> &[usize] {
        &self.observations
    }

    fn log_xi(&self, x: &usize, n: usize) -> f64 {
        self.log_xi[n - 1][*x]
    }

    fn sample_forward_proposal<R: Rng + ?Sized>(&self, rng: &mut R, x_prev: Option<&usize>, n: usize) -> usize {
        match x_prev {
            None => self.fwd_first.sampler.sample(rng),
            Some(&xp) => self.fwd[n - 2][xp].sampler.sample(rng),
        }
    }

    fn log_q_fwd(&self, x: &usize, x_prev: Option<&usize>, n: usize) -> f64 {
        match x_prev {
            None => self.fwd_first.log_p[*x],
            Some(&xp) => self.fwd[n - 2][xp].log_p[*x],
        }
    }

    fn sample_backward_proposal<R: Rng + ?Sized>(&self, rng: &mut R, x_next: Option<&usize>, n: usize) -> usize {
        match x_next {
            None => self.bwd_last.sampler.sample(rng),
            Some(&xn) => self.bwd[n - 1][xn].sampler.sample(rng),
        }
    }

    fn log_q_bwd(&self, x: &usize, x_next: Option<&usize>, n: usize) -> f64 {
        match x_next {
            None => self.bwd_last.log_p[*x],
            Some(&xn) => self.bwd[n - 1][xn].log_p[*x],
        }
    }

    fn sample_combining_proposal<R: Rng + ?Sized>(&self, rng: &mut R, x_prev: &usize, x_next: &usize, n: usize) -> usize {
        self.combine_pmf(*x_prev, *x_next, n).sampler.sample(rng)
    }

    fn log_q_combine(&self, x: &usize, x_prev: &usize, x_next: &usize, n: usize) -> f64 {
        self.combine_pmf(*x_prev, *x_next, n).log_p[*x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::rng::RngStream;

    #[test]
    fn rejects_bad_rows() {
        let e = vec![vec![1.0]; 2];
        assert!(DiscreteModel::new(vec![0.5, 0.5], vec![vec![0.5, 0.6], vec![0.5, 0.5]], e.clone()).is_err());
        assert!(DiscreteModel::new(vec![0.5, 0.5], vec![vec![1.5, -0.5], vec![0.5, 0.5]], e.clone()).is_err());
        assert!(DiscreteModel::new(vec![0.5, 0.5], vec![vec![0.5, 0.3, 0.2]], e).is_err());
    }

    #[test]
    fn identity_transitions_give_constant_path() {
        let m = DiscreteModel::new(
            vec![0.2, 0.5, 0.3],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![vec![0.5, 0.5]; 3],
        )
        .unwrap();
        for seed in 0..20 {
            let traj = simulate(&m, &mut RngStream::new(seed, 0), 15).unwrap();
            assert!(traj.states.iter().all(|&x| x == traj.states[0]));
        }
    }

    #[test]
    fn random_rows_are_pmfs() {
        let m = DiscreteModel::random(&mut RngStream::new(7, 0), 4, 3).unwrap();
        for row in m.transition().iter().chain(m.emission()) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn adapted_proposals_normalize() {
        let mut rng = RngStream::new(3, 1);
        let m = DiscreteModel::random(&mut rng, 3, 2).unwrap();
        let traj = simulate(&m, &mut rng, 6).unwrap();
        let h = DiscreteHmm::new(m, traj.observations, DiscreteXi::Predictive, ProposalKind::Adapted).unwrap();
        let mass = |f: &dyn Fn(usize) -> f64| (0..3).map(|x| f(x).exp()).sum::<f64>();
        assert!((mass(&|x| h.log_q_fwd(&x, None, 1)) - 1.0).abs() < 1e-12);
        assert!((mass(&|x| h.log_q_fwd(&x, Some(&2), 4)) - 1.0).abs() < 1e-12);
        assert!((mass(&|x| h.log_q_bwd(&x, Some(&0), 3)) - 1.0).abs() < 1e-12);
        assert!((mass(&|x| h.log_q_combine(&x, &1, &2, 3)) - 1.0).abs() < 1e-12);
        assert!((mass(&|x| h.log_xi(&x, 5)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predictive_first_is_law_of_x1() {
        let m = DiscreteModel::random(&mut RngStream::new(11, 0), 3, 2).unwrap();
        let pred = exact_predictive(&m, &[0, 1, 1]).unwrap();
        assert_eq!(pred[0], m.first());
    }
}
