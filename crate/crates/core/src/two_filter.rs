//! Marginal likelihood and smoothing estimates that combine a forward run up
//! to `t - 1` with a backward run down to `t` (quadratic form) or `t + 1`
//! (linear form, bridging the gap with a combining proposal at `t`).

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backward::{run_backward, BackwardRun};
use crate::error::{Result, SmcError};
use crate::forward::{run_forward, FilterOptions, ForwardRun};
use crate::model::HmmModel;
use crate::particles::{Categorical, LogSumExp, Resampling};
use crate::rng::RngStream;

const FORWARD_STREAM: u64 = 0;
const BACKWARD_STREAM: u64 = 1;
const COMBINE_STREAM: u64 = 2;
const BETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaScheme {
    #[default]
    Uniform,
    /// Proportional to the final incremental weights of each run.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Double sum over all forward/backward pairs.
    #[serde(rename = "n2")]
    OrderN2,
    /// Sampled pairings bridged by the combining proposal.
    #[default]
    #[serde(rename = "n")]
    OrderN,
    /// Plain forward filter over the whole horizon.
    ForwardOnly,
}

impl Estimator {
    pub fn tag(&self) -> &'static str {
        match self {
            Estimator::OrderN2 => "n2",
            Estimator::OrderN => "n",
            Estimator::ForwardOnly => "forward-only",
        }
    }

    /// Admissible meeting times for a horizon.
    pub fn meeting_range(&self, horizon: usize) -> Option<(usize, usize)> {
        let (lo, hi) = match self {
            Estimator::OrderN2 => (2, horizon.checked_sub(1)?),
            Estimator::OrderN => (3, horizon.checked_sub(2)?),
            Estimator::ForwardOnly => (1, horizon),
        };
        (lo <= hi).then_some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoFilterConfig {
    pub particles: usize,
    pub meeting_time: usize,
    #[serde(default)]
    pub beta: BetaScheme,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub resampling: Resampling,
}

impl TwoFilterConfig {
    pub fn new(particles: usize, meeting_time: usize, estimator: Estimator) -> Self {
        TwoFilterConfig {
            particles,
            meeting_time,
            beta: BetaScheme::Uniform,
            estimator,
            resampling: Resampling::Multinomial,
        }
    }

    fn filter_options(&self) -> FilterOptions {
        FilterOptions {
            particles: self.particles,
            resampling: self.resampling,
        }
    }

    fn check(&self, horizon: usize) -> Result<()> {
        if self.particles == 0 {
            return Err(SmcError::InvalidConfig("particle count must be at least 1".into()));
        }
        let Some((lo, hi)) = self.estimator.meeting_range(horizon) else {
            return Err(SmcError::InvalidConfig(format!(
                "horizon {horizon} too short for the {} estimator",
                self.estimator.tag()
            )));
        };
        if self.meeting_time < lo || self.meeting_time > hi {
            return Err(SmcError::TimeOutOfRange { n: self.meeting_time, lo, hi });
        }
        Ok(())
    }
}

/// Pairing probabilities over forward (time `t - 1`) and backward
/// (time `t + 1`) particle indices.
#[derive(Debug, Clone)]
pub struct BetaWeights {
    forward: Vec<f64>,
    backward: Vec<f64>,
}

impl BetaWeights {
    pub fn uniform(n: usize) -> Self {
        BetaWeights {
            forward: vec![1.0 / n as f64; n],
            backward: vec![1.0 / n as f64; n],
        }
    }

    /// From normalized log-weights, floored at `1e-12` and renormalized.
    pub fn proportional(forward_log_norm: &[f64], backward_log_norm: &[f64]) -> Self {
        let floor = |lw: &[f64]| {
            let clipped: Vec<f64> = lw.iter().map(|l| l.exp().max(BETA_FLOOR)).collect();
            let s: f64 = clipped.iter().sum();
            clipped.into_iter().map(|b| b / s).collect()
        };
        BetaWeights {
            forward: floor(forward_log_norm),
            backward: floor(backward_log_norm),
        }
    }

    pub fn forward(&self) -> &[f64] {
        &self.forward
    }

    pub fn backward(&self) -> &[f64] {
        &self.backward
    }
}

/// `n` index pairs, forward from `beta.forward`, backward from `beta.backward`.
pub fn sample_pairings<R: Rng + ?Sized>(rng: &mut R, beta: &BetaWeights, n: usize) -> Vec<(usize, usize)> {
    let fwd = Categorical::from_weights(beta.forward.iter().copied()).expect("positive beta");
    let bwd = Categorical::from_weights(beta.backward.iter().copied()).expect("positive beta");
    (0..n).map(|_| (fwd.sample(rng), bwd.sample(rng))).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub log_p_hat: f64,
    /// Forward constant through `t - 2` (all of `1..=T` for the forward-only estimator).
    pub log_fwd_nc: f64,
    /// Backward constant from `t + 1` (quadratic) or `t + 2` (linear).
    pub log_bwd_nc: f64,
    pub log_combine_term: f64,
    pub ess_fwd_trace: Vec<f64>,
    /// Backward ESS in run order, starting at `T`.
    pub ess_bwd_trace: Vec<f64>,
    pub wall_time_ms: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub config: TwoFilterConfig,
}

#[derive(Debug, Clone)]
pub struct SmoothingEstimate {
    /// One entry per functional, estimates of `E[phi(X_t) | y_{1:T}]`.
    pub expectations: Vec<f64>,
    pub report: EstimateReport,
}

/// Log combination terms and the states `x_t` they attach to.
struct Combination<S> {
    log_terms: Vec<f64>,
    states: Vec<S>,
    log_scale: f64,
}

fn finish<S>(
    start: Instant,
    rng: &RngStream,
    cfg: &TwoFilterConfig,
    fwd: Option<&ForwardRun<S>>,
    bwd: Option<&BackwardRun<S>>,
    log_fwd_nc: f64,
    log_bwd_nc: f64,
    log_combine_term: f64,
) -> EstimateReport {
    EstimateReport {
        log_p_hat: log_fwd_nc + log_bwd_nc + log_combine_term,
        log_fwd_nc,
        log_bwd_nc,
        log_combine_term,
        ess_fwd_trace: fwd.map(|f| f.ess_trace()).unwrap_or_default(),
        ess_bwd_trace: bwd.map(|b| b.ess_trace()).unwrap_or_default(),
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
        config: *cfg,
    }
}

fn check_xi(log_xi: f64, time: usize) -> Result<f64> {
    if log_xi == f64::NEG_INFINITY {
        Err(SmcError::InvalidXi { time })
    } else {
        Ok(log_xi)
    }
}

/// Terms `W_{t-1}^i W~_t^j f(x~_t^j | x_{t-1}^i) / xi_t(x~_t^j)` summed over
/// `i` for every `j`, streamed row by row.
fn combine_n2<M: HmmModel>(
    model: &M,
    fwd: &ForwardRun<M::State>,
    bwd: &BackwardRun<M::State>,
    t: usize,
) -> Result<Combination<M::State>> {
    let f_sys = fwd.system(t - 1);
    let b_sys = bwd.system(t);
    let n = b_sys.len();
    let mut b_terms = Vec::with_capacity(n);
    for (x, &w) in b_sys.particles.iter().zip(&b_sys.log_weights) {
        b_terms.push(if w == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            w - check_xi(model.log_xi(x, t), t)?
        });
    }
    let mut columns = vec![LogSumExp::new(); n];
    for (xp, &wf) in f_sys.particles.iter().zip(&f_sys.log_weights) {
        if wf == f64::NEG_INFINITY {
            continue;
        }
        for (j, (x, &wb)) in b_sys.particles.iter().zip(&b_terms).enumerate() {
            if wb == f64::NEG_INFINITY {
                continue;
            }
            columns[j].push(wf + wb + model.log_f(xp, x, t));
        }
    }
    let scale = 2.0 * (n as f64).ln();
    Ok(Combination {
        log_terms: columns.iter().map(LogSumExp::value).collect(),
        states: b_sys.particles.clone(),
        log_scale: scale,
    })
}

fn combine_n<M: HmmModel>(
    model: &M,
    fwd: &ForwardRun<M::State>,
    bwd: &BackwardRun<M::State>,
    t: usize,
    cfg: &TwoFilterConfig,
    rng: &mut RngStream,
) -> Result<Combination<M::State>> {
    let f_sys = fwd.system(t - 1);
    let b_sys = bwd.system(t + 1);
    let n = cfg.particles;
    let beta = match cfg.beta {
        BetaScheme::Uniform => BetaWeights::uniform(n),
        BetaScheme::Proportional => BetaWeights::proportional(&f_sys.log_norm_weights, &b_sys.log_norm_weights),
    };
    let pairs = sample_pairings(rng, &beta, n);
    let y = model.observation(t);
    let mut log_terms = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for (i, j) in pairs {
        let (xp, xn) = (&f_sys.particles[i], &b_sys.particles[j]);
        let x = model.sample_combining_proposal(rng, xp, xn, t);
        let (wf, wb) = (f_sys.log_weights[i], b_sys.log_weights[j]);
        let term = if wf == f64::NEG_INFINITY || wb == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            wf + wb + model.log_f(xp, &x, t) + model.log_f(&x, xn, t + 1) + model.log_g(y, &x, t)
                - check_xi(model.log_xi(xn, t + 1), t + 1)?
                - beta.forward[i].ln()
                - beta.backward[j].ln()
                - model.log_q_combine(&x, xp, xn, t)
        };
        if term.is_nan() {
            return Err(SmcError::Numerical(format!("NaN combination term at t = {t}")));
        }
        log_terms.push(term);
        states.push(x);
    }
    Ok(Combination {
        log_terms,
        states,
        log_scale: 3.0 * (n as f64).ln(),
    })
}

struct Runs<S> {
    fwd: ForwardRun<S>,
    bwd: BackwardRun<S>,
    comb: Combination<S>,
    log_fwd_nc: f64,
    log_bwd_nc: f64,
}

fn two_filter_runs<M: HmmModel>(model: &M, rng: &RngStream, cfg: &TwoFilterConfig) -> Result<Runs<M::State>> {
    let t = cfg.meeting_time;
    let opts = cfg.filter_options();
    let fwd = run_forward(model, &mut rng.split(FORWARD_STREAM), &opts, t - 1, true)?;
    let (bwd, comb, log_bwd_from) = match cfg.estimator {
        Estimator::OrderN2 => {
            let bwd = run_backward(model, &mut rng.split(BACKWARD_STREAM), &opts, t, true)?;
            let comb = combine_n2(model, &fwd, &bwd, t)?;
            (bwd, comb, t + 1)
        }
        Estimator::OrderN => {
            let bwd = run_backward(model, &mut rng.split(BACKWARD_STREAM), &opts, t + 1, true)?;
            let comb = combine_n(model, &fwd, &bwd, t, cfg, &mut rng.split(COMBINE_STREAM))?;
            (bwd, comb, t + 2)
        }
        Estimator::ForwardOnly => unreachable!("handled by the caller"),
    };
    Ok(Runs {
        log_fwd_nc: fwd.log_nc_through(t - 2),
        log_bwd_nc: bwd.log_nc_from(log_bwd_from),
        fwd,
        bwd,
        comb,
    })
}

fn combine_value<S>(comb: &Combination<S>, t: usize) -> Result<f64> {
    let mut acc = LogSumExp::new();
    comb.log_terms.iter().for_each(|&l| acc.push(l));
    let total = acc.value();
    if total == f64::NEG_INFINITY {
        return Err(SmcError::EmptyCombination { time: t });
    }
    Ok(total - comb.log_scale)
}

/// Quadratic-cost estimate of `log p(y_{1:T})`.
pub fn estimate_n2<M: HmmModel>(model: &M, rng: &RngStream, cfg: &TwoFilterConfig) -> Result<EstimateReport> {
    estimate(model, rng, &TwoFilterConfig { estimator: Estimator::OrderN2, ..*cfg })
}

/// Linear-cost estimate of `log p(y_{1:T})`.
pub fn estimate_n<M: HmmModel>(model: &M, rng: &RngStream, cfg: &TwoFilterConfig) -> Result<EstimateReport> {
    estimate(model, rng, &TwoFilterConfig { estimator: Estimator::OrderN, ..*cfg })
}

/// Estimate of `log p(y_{1:T})` with the estimator named in `cfg`. The
/// forward, backward and combination stages draw from independent children
/// of `rng`.
pub fn estimate<M: HmmModel>(model: &M, rng: &RngStream, cfg: &TwoFilterConfig) -> Result<EstimateReport> {
    let start = Instant::now();
    if cfg.estimator == Estimator::ForwardOnly {
        if cfg.particles == 0 {
            return Err(SmcError::InvalidConfig("particle count must be at least 1".into()));
        }
        let fwd = run_forward(model, &mut rng.split(FORWARD_STREAM), &cfg.filter_options(), model.horizon(), true)?;
        return Ok(finish(start, rng, cfg, Some(&fwd), None, fwd.log_nc, 0.0, 0.0));
    }
    cfg.check(model.horizon())?;
    let runs = two_filter_runs(model, rng, cfg)?;
    let log_combine = combine_value(&runs.comb, cfg.meeting_time)?;
    Ok(finish(
        start,
        rng,
        cfg,
        Some(&runs.fwd),
        Some(&runs.bwd),
        runs.log_fwd_nc,
        runs.log_bwd_nc,
        log_combine,
    ))
}

/// Self-normalized estimates of `E[phi(X_t) | y_{1:T}]` for each functional,
/// reusing the draws behind the likelihood estimate in the report.
pub fn smooth_expectations<M, F>(
    model: &M,
    rng: &RngStream,
    cfg: &TwoFilterConfig,
    phis: &[F],
) -> Result<SmoothingEstimate>
where
    M: HmmModel,
    F: Fn(&M::State) -> f64,
{
    let start = Instant::now();
    if cfg.estimator == Estimator::ForwardOnly {
        return Err(SmcError::InvalidConfig("smoothing needs a two-filter estimator".into()));
    }
    cfg.check(model.horizon())?;
    let runs = two_filter_runs(model, rng, cfg)?;
    let t = cfg.meeting_time;
    let log_combine = combine_value(&runs.comb, t)?;
    // Same accumulation as the numerators, so phi = 1 gives exactly one.
    let mut total = LogSumExp::new();
    runs.comb.log_terms.iter().for_each(|&l| total.push(l));
    let log_total = total.value();
    let expectations = phis
        .iter()
        .map(|phi| {
            let mut pos = LogSumExp::new();
            let mut neg = LogSumExp::new();
            for (x, &l) in runs.comb.states.iter().zip(&runs.comb.log_terms) {
                let v = phi(x);
                if v.is_nan() {
                    return Err(SmcError::Numerical(format!("functional returned NaN at t = {t}")));
                }
                if v > 0.0 {
                    pos.push(l + v.ln());
                } else if v < 0.0 {
                    neg.push(l + (-v).ln());
                }
            }
            Ok((pos.value() - log_total).exp() - (neg.value() - log_total).exp())
        })
        .collect::<Result<Vec<_>>>()?;
    let report = finish(
        start,
        rng,
        cfg,
        Some(&runs.fwd),
        Some(&runs.bwd),
        runs.log_fwd_nc,
        runs.log_bwd_nc,
        log_combine,
    );
    Ok(SmoothingEstimate { expectations, report })
}

pub fn smooth_expectation<M, F>(model: &M, rng: &RngStream, cfg: &TwoFilterConfig, phi: F) -> Result<f64>
where
    M: HmmModel,
    F: Fn(&M::State) -> f64,
{
    Ok(smooth_expectations(model, rng, cfg, &[phi])?.expectations[0])
}
