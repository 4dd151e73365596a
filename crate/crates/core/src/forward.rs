//! Forward particle filter. Each step proposes from `q_n`, weights by
//! `g f / q` and (unless told otherwise) resamples multinomially. The
//! running product of mean incremental weights estimates `p(y_{1:n})`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Direction, Result, SmcError};
use crate::model::HmmModel;
use crate::particles::{ParticleSystem, Resampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOptions {
    pub particles: usize,
    #[serde(default)]
    pub resampling: Resampling,
}

impl FilterOptions {
    pub fn new(particles: usize) -> Self {
        FilterOptions {
            particles,
            resampling: Resampling::Multinomial,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(SmcError::InvalidConfig("particle count must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn scheme(&self, resample: bool) -> Option<Resampling> {
        resample.then_some(self.resampling)
    }
}

pub fn forward_init<M, R>(
    model: &M,
    rng: &mut R,
    opts: &FilterOptions,
    resample: bool,
) -> Result<ParticleSystem<M::State>>
where
    M: HmmModel,
    R: Rng + ?Sized,
{
    opts.validate()?;
    let y = model.observation(1);
    let mut particles = Vec::with_capacity(opts.particles);
    let mut log_w = Vec::with_capacity(opts.particles);
    for _ in 0..opts.particles {
        let x = model.sample_forward_proposal(rng, None, 1);
        log_w.push(model.log_g(y, &x, 1) + model.log_initial(&x) - model.log_q_fwd(&x, None, 1));
        particles.push(x);
    }
    ParticleSystem::from_weights(1, Direction::Forward, particles, log_w, Vec::new(), opts.scheme(resample), rng)
}

/// Advance a resampled system at `n - 1` to time `n`.
pub fn forward_step<M, R>(
    model: &M,
    rng: &mut R,
    prev: &ParticleSystem<M::State>,
    n: usize,
    resample: bool,
    opts: &FilterOptions,
) -> Result<ParticleSystem<M::State>>
where
    M: HmmModel,
    R: Rng + ?Sized,
{
    if n < 2 || n > model.horizon() {
        return Err(SmcError::TimeOutOfRange { n, lo: 2, hi: model.horizon() });
    }
    if prev.time + 1 != n || !prev.resampled {
        return Err(SmcError::InvalidConfig(format!(
            "forward step to {n} needs the resampled system at {}",
            n - 1
        )));
    }
    let y = model.observation(n);
    let mut particles = Vec::with_capacity(opts.particles);
    let mut log_w = Vec::with_capacity(opts.particles);
    for &a in &prev.ancestors {
        let xp = &prev.particles[a];
        let x = model.sample_forward_proposal(rng, Some(xp), n);
        log_w.push(model.log_g(y, &x, n) + model.log_f(xp, &x, n) - model.log_q_fwd(&x, Some(xp), n));
        particles.push(x);
    }
    ParticleSystem::from_weights(
        n,
        Direction::Forward,
        particles,
        log_w,
        prev.ancestors.clone(),
        opts.scheme(resample),
        rng,
    )
}

/// Systems for `n = 1..=n_stop`.
#[derive(Debug, Clone)]
pub struct ForwardRun<S> {
    pub systems: Vec<ParticleSystem<S>>,
    /// Sum of every step's `log_nc_factor`: the estimate of `log p(y_{1:n_stop})`.
    pub log_nc: f64,
    pub resampled_last: bool,
}

impl<S> ForwardRun<S> {
    pub fn n_stop(&self) -> usize {
        self.systems.len()
    }

    pub fn system(&self, n: usize) -> &ParticleSystem<S> {
        &self.systems[n - 1]
    }

    /// Estimate of `log p(y_{1:k})`; zero for `k = 0`.
    pub fn log_nc_through(&self, k: usize) -> f64 {
        self.systems[..k].iter().map(|s| s.log_nc_factor).sum()
    }

    pub fn ess_trace(&self) -> Vec<f64> {
        self.systems.iter().map(|s| s.ess).collect()
    }

    /// Ancestral path `x_{1:n}` ending at particle `i` of the system at `n`.
    pub fn path(&self, n: usize, mut i: usize) -> Vec<&S> {
        let mut out = Vec::with_capacity(n);
        for k in (1..=n).rev() {
            let sys = self.system(k);
            out.push(&sys.particles[i]);
            if k > 1 {
                i = sys.parents[i];
            }
        }
        out.reverse();
        out
    }
}

pub fn run_forward<M, R>(
    model: &M,
    rng: &mut R,
    opts: &FilterOptions,
    n_stop: usize,
    skip_final_resample: bool,
) -> Result<ForwardRun<M::State>>
where
    M: HmmModel,
    R: Rng + ?Sized,
{
    if n_stop < 1 || n_stop > model.horizon() {
        return Err(SmcError::TimeOutOfRange { n: n_stop, lo: 1, hi: model.horizon() });
    }
    let resample_at = |n: usize| n < n_stop || !skip_final_resample;
    let mut systems = Vec::with_capacity(n_stop);
    systems.push(forward_init(model, rng, opts, resample_at(1))?);
    for n in 2..=n_stop {
        let next = forward_step(model, rng, &systems[n - 2], n, resample_at(n), opts)?;
        systems.push(next);
    }
    let log_nc = systems.iter().map(|s| s.log_nc_factor).sum();
    Ok(ForwardRun {
        systems,
        log_nc,
        resampled_last: !skip_final_resample,
    })
}
