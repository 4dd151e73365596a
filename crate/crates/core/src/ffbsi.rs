//! Forward filtering backward simulation. Trajectories are drawn backward
//! through a completed forward run; each backward index is found by
//! rejection sampling against a bound on the transition density, with an
//! exact categorical fallback once the per-step proposal budget runs out.

use rand::Rng;

use crate::error::{Result, SmcError};
use crate::forward::ForwardRun;
use crate::model::HmmModel;
use crate::particles::Categorical;
use crate::rng::RngStream;

/// Slack for rounding when comparing a density against its bound.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfbsiOptions {
    pub trajectories: usize,
    /// Proposals per step are capped at `ceil(rejection_cap * N)`.
    pub rejection_cap: f64,
}

impl FfbsiOptions {
    pub fn new(trajectories: usize) -> Self {
        FfbsiOptions {
            trajectories,
            rejection_cap: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FfbsiTrajectorySet<S> {
    /// `trajectories[m][n - 1]` is `x_n` of trajectory `m`.
    pub trajectories: Vec<Vec<S>>,
    /// Particle indices into the forward systems, same layout.
    pub indices: Vec<Vec<usize>>,
    /// Rejection-sampling proposals made at each `n = 1..T-1`, summed over trajectories.
    pub proposals_per_step: Vec<u64>,
    /// Trajectories that needed the exhaustive draw at each `n = 1..T-1`.
    pub fallbacks_per_step: Vec<u64>,
}

impl<S> FfbsiTrajectorySet<S> {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Draw trajectories from the smoothing law implied by `forward`, which must
/// cover `1..=T`. Trajectory `m` uses the stream `rng.split(m)`.
pub fn ffbsi_sample<M: HmmModel>(
    model: &M,
    forward: &ForwardRun<M::State>,
    rng: &RngStream,
    opts: &FfbsiOptions,
    log_f_bound: f64,
) -> Result<FfbsiTrajectorySet<M::State>> {
    let horizon = forward.n_stop();
    if horizon != model.horizon() {
        return Err(SmcError::InvalidConfig(format!(
            "backward simulation needs a forward run to T = {}, got {horizon}",
            model.horizon()
        )));
    }
    if !(opts.rejection_cap >= 0.0) {
        return Err(SmcError::InvalidConfig("rejection cap must be nonnegative".into()));
    }
    let samplers: Vec<Categorical> = forward
        .systems
        .iter()
        .map(|s| Categorical::from_log_weights(&s.log_norm_weights).expect("normalized weights"))
        .collect();
    let cap = (opts.rejection_cap * forward.system(1).len() as f64).ceil() as u64;

    let steps = horizon - 1;
    let mut out = FfbsiTrajectorySet {
        trajectories: Vec::with_capacity(opts.trajectories),
        indices: Vec::with_capacity(opts.trajectories),
        proposals_per_step: vec![0; steps],
        fallbacks_per_step: vec![0; steps],
    };
    for m in 0..opts.trajectories {
        let mut r = rng.split(m as u64);
        let mut idx = vec![0; horizon];
        idx[horizon - 1] = samplers[horizon - 1].sample(&mut r);
        for n in (1..horizon).rev() {
            let sys = forward.system(n);
            let x_next = &forward.system(n + 1).particles[idx[n]];
            let mut chosen = None;
            let mut tries = 0;
            while tries < cap {
                tries += 1;
                let j = samplers[n - 1].sample(&mut r);
                let lf = model.log_f(&sys.particles[j], x_next, n + 1);
                if lf > log_f_bound + BOUND_SLACK {
                    return Err(SmcError::BoundViolated { time: n + 1, value: lf.exp(), bound: log_f_bound.exp() });
                }
                let u: f64 = r.random();
                if u.ln() < lf - log_f_bound {
                    chosen = Some(j);
                    break;
                }
            }
            out.proposals_per_step[n - 1] += tries;
            let j = match chosen {
                Some(j) => j,
                None => {
                    out.fallbacks_per_step[n - 1] += 1;
                    let lw: Vec<f64> = sys
                        .particles
                        .iter()
                        .zip(&sys.log_norm_weights)
                        .map(|(x, &w)| w + model.log_f(x, x_next, n + 1))
                        .collect();
                    Categorical::from_log_weights(&lw)
                        .ok_or(SmcError::Degenerate { time: n, direction: crate::error::Direction::Forward })?
                        .sample(&mut r)
                }
            };
            idx[n - 1] = j;
        }
        out.trajectories
            .push(idx.iter().enumerate().map(|(k, &i)| forward.system(k + 1).particles[i].clone()).collect());
        out.indices.push(idx);
    }
    Ok(out)
}

/// `(1/M) sum_m phi(x_t^(m))`.
pub fn ffbsi_expectation<S>(set: &FfbsiTrajectorySet<S>, t: usize, phi: impl Fn(&S) -> f64) -> f64 {
    let total: f64 = set.trajectories.iter().map(|tr| phi(&tr[t - 1])).sum();
    total / set.len() as f64
}
