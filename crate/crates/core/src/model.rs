//! Model abstraction shared by every filter.
//!
//! A [`StateSpaceModel`] carries the generative dynamics: the law of the
//! first hidden state, the transition density `f(x_n | x_{n-1})` and the
//! observation density `g(y_n | x_n)`. An [`HmmModel`] additionally fixes an
//! observation record `y_{1:T}`, the artificial densities `xi_n` that define
//! the backward targets, and the importance proposals used by the forward,
//! backward and combining samplers.
//!
//! Time indices are 1-based throughout: `x_0` is the initial point, `y_n` and
//! `x_n` run over `1..=T`. Densities are with respect to Lebesgue measure for
//! continuous states and counting measure for finite state spaces, so a
//! probability mass function plugs into the same evaluators. Evaluators
//! return `f64::NEG_INFINITY` for zero density and never NaN.

use std::fmt::Debug;

use rand::Rng;

use crate::error::{Result, SmcError};

pub trait StateSpaceModel: Sync {
    type State: Clone + Debug + Send + Sync;
    type Obs: Clone + Debug + Send + Sync;

    fn state_dim(&self) -> usize;

    fn sample_x0<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    /// Draw `x_n ~ f(. | x_{n-1})`, `n >= 1`.
    fn sample_transition<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x_prev: &Self::State,
        n: usize,
    ) -> Self::State;

    fn sample_observation<R: Rng + ?Sized>(&self, rng: &mut R, x: &Self::State, n: usize)
        -> Self::Obs;

    /// Log-density of `X_1`, i.e. `f(x_1 | x_0)` integrated against the law
    /// of `X_0` (just `f(x_1 | x_0)` when `X_0` is a point mass).
    fn log_initial(&self, x: &Self::State) -> f64;

    /// `log f(x_n | x_{n-1})` for `n >= 2`.
    fn log_f(&self, x_prev: &Self::State, x: &Self::State, n: usize) -> f64;

    fn log_g(&self, y: &Self::Obs, x: &Self::State, n: usize) -> f64;

    /// `log sup_{x, x'} f(x' | x)` when finite; used by rejection samplers.
    fn log_f_bound(&self) -> Option<f64> {
        None
    }
}

pub trait HmmModel: StateSpaceModel {
    /// `y_1..y_T`, stored at index `n - 1`.
    fn observations(&self) -> &[Self::Obs];

    fn horizon(&self) -> usize {
        self.observations().len()
    }

    fn observation(&self, n: usize) -> &Self::Obs {
        &self.observations()[n - 1]
    }

    /// Artificial density `xi_n(x_n)` used by the backward filter.
    fn log_xi(&self, x: &Self::State, n: usize) -> f64;

    /// Forward proposal `q_n(. | x_{n-1})`; `x_prev` is `None` at `n = 1`.
    fn sample_forward_proposal<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x_prev: Option<&Self::State>,
        n: usize,
    ) -> Self::State;

    fn log_q_fwd(&self, x: &Self::State, x_prev: Option<&Self::State>, n: usize) -> f64;

    /// Backward proposal `q_n(. | x_{n+1})`; `x_next` is `None` at `n = T`.
    fn sample_backward_proposal<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x_next: Option<&Self::State>,
        n: usize,
    ) -> Self::State;

    fn log_q_bwd(&self, x: &Self::State, x_next: Option<&Self::State>, n: usize) -> f64;

    /// Bridging proposal `q_t(x_t | x_{t-1}, x_{t+1})`.
    fn sample_combining_proposal<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x_prev: &Self::State,
        x_next: &Self::State,
        n: usize,
    ) -> Self::State;

    fn log_q_combine(
        &self,
        x: &Self::State,
        x_prev: &Self::State,
        x_next: &Self::State,
        n: usize,
    ) -> f64;
}

/// Which family of importance proposals a concrete model exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    /// Forward `q_n = f`, backward `q_n = xi_n`, combining `q_t = f(. | x_{t-1})`.
    Prior,
    /// Exact conditionals: forward `∝ f g`, backward `∝ xi_n g f`,
    /// combining `∝ f g f`.
    #[default]
    Adapted,
}

/// A simulated path: `states[n]` is `x_n` for `n = 0..=T`, `observations[n - 1]` is `y_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, O> {
    pub states: Vec<S>,
    pub observations: Vec<O>,
}

pub fn simulate<M, R>(model: &M, rng: &mut R, horizon: usize) -> Result<Trajectory<M::State, M::Obs>>
where
    M: StateSpaceModel,
    R: Rng + ?Sized,
{
    if horizon == 0 {
        return Err(SmcError::InvalidConfig("simulation horizon must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon);
    states.push(model.sample_x0(rng));
    for n in 1..=horizon {
        let x = model.sample_transition(rng, &states[n - 1], n);
        observations.push(model.sample_observation(rng, &x, n));
        states.push(x);
    }
    Ok(Trajectory {
        states,
        observations,
    })
}
