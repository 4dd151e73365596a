//! Backward information filter. Runs from `T` down to a stopping time,
//! targeting the artificial laws built from the `xi_n` sequence; the running
//! product of mean incremental weights estimates the `xi`-dependent constant
//! `p~(y_{n:T}) = sum xi_n(x_n) g(y_n | x_n) prod_{k>n} f(x_k | x_{k-1}) g(y_k | x_k)`.

use rand::Rng;

use crate::error::{Direction, Result, SmcError};
use crate::forward::FilterOptions;
use crate::model::HmmModel;
use crate::particles::ParticleSystem;

pub fn backward_init<M, R>(
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
    let t = model.horizon();
    let y = model.observation(t);
    let mut particles = Vec::with_capacity(opts.particles);
    let mut log_w = Vec::with_capacity(opts.particles);
    for _ in 0..opts.particles {
        let x = model.sample_backward_proposal(rng, None, t);
        log_w.push(model.log_xi(&x, t) + model.log_g(y, &x, t) - model.log_q_bwd(&x, None, t));
        particles.push(x);
    }
    ParticleSystem::from_weights(t, Direction::Backward, particles, log_w, Vec::new(), opts.scheme(resample), rng)
}

/// Move a resampled system at `n + 1` back to time `n`.
pub fn backward_step<M, R>(
    model: &M,
    rng: &mut R,
    next: &ParticleSystem<M::State>,
    n: usize,
    resample: bool,
    opts: &FilterOptions,
) -> Result<ParticleSystem<M::State>>
where
    M: HmmModel,
    R: Rng + ?Sized,
{
    let horizon = model.horizon();
    if n < 1 || n >= horizon {
        return Err(SmcError::TimeOutOfRange { n, lo: 1, hi: horizon.saturating_sub(1) });
    }
    if next.time != n + 1 || !next.resampled {
        return Err(SmcError::InvalidConfig(format!(
            "backward step to {n} needs the resampled system at {}",
            n + 1
        )));
    }
    let y = model.observation(n);
    let mut particles = Vec::with_capacity(opts.particles);
    let mut log_w = Vec::with_capacity(opts.particles);
    for &a in &next.ancestors {
        let xn = &next.particles[a];
        let log_xi_next = model.log_xi(xn, n + 1);
        if log_xi_next == f64::NEG_INFINITY {
            return Err(SmcError::InvalidXi { time: n + 1 });
        }
        let x = model.sample_backward_proposal(rng, Some(xn), n);
        log_w.push(
            model.log_xi(&x, n) + model.log_g(y, &x, n) + model.log_f(&x, xn, n + 1)
                - log_xi_next
                - model.log_q_bwd(&x, Some(xn), n),
        );
        particles.push(x);
    }
    ParticleSystem::from_weights(
        n,
        Direction::Backward,
        particles,
        log_w,
        next.ancestors.clone(),
        opts.scheme(resample),
        rng,
    )
}

/// Systems for `n = T, T-1, ..., n_stop`, in that order.
#[derive(Debug, Clone)]
pub struct BackwardRun<S> {
    pub systems: Vec<ParticleSystem<S>>,
    /// Estimate of `log p~(y_{n_stop:T})`.
    pub log_nc: f64,
    pub resampled_last: bool,
}

impl<S> BackwardRun<S> {
    pub fn horizon(&self) -> usize {
        self.systems[0].time
    }

    pub fn n_stop(&self) -> usize {
        self.systems[self.systems.len() - 1].time
    }

    pub fn system(&self, n: usize) -> &ParticleSystem<S> {
        &self.systems[self.horizon() - n]
    }

    /// Estimate of `log p~(y_{k:T})`; zero for `k = T + 1`.
    pub fn log_nc_from(&self, k: usize) -> f64 {
        let count = self.horizon() + 1 - k;
        self.systems[..count].iter().map(|s| s.log_nc_factor).sum()
    }

    pub fn ess_trace(&self) -> Vec<f64> {
        self.systems.iter().map(|s| s.ess).collect()
    }

    /// Path `x_{n:T}` starting at particle `i` of the system at `n`.
    pub fn path(&self, n: usize, mut i: usize) -> Vec<&S> {
        let horizon = self.horizon();
        let mut out = Vec::with_capacity(horizon + 1 - n);
        for k in n..=horizon {
            let sys = self.system(k);
            out.push(&sys.particles[i]);
            if k < horizon {
                i = sys.parents[i];
            }
        }
        out
    }
}

pub fn run_backward<M, R>(
    model: &M,
    rng: &mut R,
    opts: &FilterOptions,
    n_stop: usize,
    skip_final_resample: bool,
) -> Result<BackwardRun<M::State>>
where
    M: HmmModel,
    R: Rng + ?Sized,
{
    let horizon = model.horizon();
    if n_stop < 1 || n_stop > horizon {
        return Err(SmcError::TimeOutOfRange { n: n_stop, lo: 1, hi: horizon });
    }
    let resample_at = |n: usize| n > n_stop || !skip_final_resample;
    let mut systems = Vec::with_capacity(horizon + 1 - n_stop);
    systems.push(backward_init(model, rng, opts, resample_at(horizon))?);
    for n in (n_stop..horizon).rev() {
        let next = backward_step(model, rng, &systems[systems.len() - 1], n, resample_at(n), opts)?;
        systems.push(next);
    }
    let log_nc = systems.iter().map(|s| s.log_nc_factor).sum();
    Ok(BackwardRun {
        systems,
        log_nc,
        resampled_last: !skip_final_resample,
    })
}
