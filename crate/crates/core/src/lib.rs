//! Sequential Monte Carlo estimates of marginal likelihoods and smoothing
//! expectations for hidden Markov models, built on the generalized two-filter
//! decomposition, together with exact Kalman and finite-state oracles.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backward;
pub mod config;
pub mod density_check;
pub mod discrete;
pub mod error;
pub mod ffbsi;
pub mod forward;
pub mod gaussian;
pub mod kalman;
pub mod linear_gaussian;
pub mod model;
pub mod oracle;
pub mod particles;
pub mod quadrature;
pub mod rng;
pub mod two_filter;

pub use error::{Direction, Result, SmcError};
pub use kalman::{kalman_filter, rts_smooth, GaussianBelief, KalmanFilter, KalmanRun};
pub use linear_gaussian::{LinearGaussianHmm, LinearGaussianModel, XiChoice};
pub use model::{simulate, HmmModel, ProposalKind, StateSpaceModel, Trajectory};
pub use quadrature::{quadrature_smoother, QuadratureOptions, QuadratureRun};
pub use particles::{ParticleSystem, Resampling};
pub use rng::RngStream;
pub use backward::{backward_init, backward_step, run_backward, BackwardRun};
pub use config::{DiscreteConfig, LinearGaussianConfig, ModelConfig};
pub use discrete::{DiscreteHmm, DiscreteModel, DiscreteXi};
pub use ffbsi::{ffbsi_expectation, ffbsi_sample, FfbsiOptions, FfbsiTrajectorySet};
pub use forward::{forward_init, forward_step, run_forward, FilterOptions, ForwardRun};
pub use two_filter::{
    estimate, estimate_n, estimate_n2, sample_pairings, smooth_expectation, smooth_expectations, BetaScheme,
    BetaWeights, EstimateReport, Estimator, SmoothingEstimate, TwoFilterConfig,
};
