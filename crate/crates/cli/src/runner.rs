//! Replicated experiment runs over `(nu2, tau2)` cells and meeting times.
//!
//! Every replicate draws from its own stream, keyed by the cell's noise
//! variances, the meeting time and the replicate index, so results do not
//! depend on the worker count or on which cells were run before. Rows are
//! computed in parallel, collected in task order and written by one writer.

use std::time::Instant;

use nalgebra::Vector2;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use tfsmc::oracle::{exact_likelihood, exact_smoothed_expectation};
use tfsmc::rng::mix64;
use tfsmc::{
    estimate, ffbsi_expectation, ffbsi_sample, kalman_filter, run_forward, simulate, smooth_expectations,
    DiscreteHmm, Estimator, FfbsiOptions, FilterOptions, HmmModel, KalmanRun, LinearGaussianHmm, ModelConfig,
    RngStream, SmcError, TwoFilterConfig,
};

use crate::data::{read_discrete, read_lg, DiscreteDataset, LgDataset};
use crate::error::{CliError, Result};
use crate::spec::ExperimentSpec;

const DATA_TAG: u64 = 0xda7a;
const FFBSI_TAG: u64 = 0xffb5;

pub type Noise = Option<(f64, f64)>;

fn noise_words(noise: Noise) -> [u64; 2] {
    noise.map(|(a, b)| [a.to_bits(), b.to_bits()]).unwrap_or([0, 0])
}

/// Stream of replicate `rep` at meeting time `t` in a cell.
pub fn replicate_stream(noise: Noise, t: usize, rep: usize) -> u64 {
    let [a, b] = noise_words(noise);
    mix64(&[a, b, t as u64, rep as u64])
}

/// Stream used to simulate a cell's observations.
pub fn data_stream(noise: Noise) -> u64 {
    let [a, b] = noise_words(noise);
    mix64(&[a, b, DATA_TAG])
}

/// Stream of the backward-simulation replicate `rep`, shared by all meeting times.
pub fn ffbsi_stream(noise: Noise, rep: usize) -> u64 {
    let [a, b] = noise_words(noise);
    mix64(&[a, b, FFBSI_TAG, rep as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub nu2: Option<f64>,
    pub tau2: Option<f64>,
    pub t: usize,
    pub replicate: usize,
    pub log_p_hat: Option<f64>,
    /// Exact log-likelihood: Kalman for linear Gaussian cells, the
    /// forward recursion for finite-state cells.
    pub log_p_kalman: Option<f64>,
    pub ess_fwd_min: Option<f64>,
    pub ess_bwd_min: Option<f64>,
    pub smoothed_mean_0: Option<f64>,
    pub smoothed_mean_1: Option<f64>,
    /// Exact smoothed mean of `X_t`.
    pub truth_0: Option<f64>,
    pub truth_1: Option<f64>,
    pub estimator: String,
    pub wall_ms: f64,
    pub error: Option<String>,
}

pub enum CellModel {
    LinearGaussian { hmm: LinearGaussianHmm, kalman: KalmanRun, data: LgDataset },
    Discrete {
        hmm: DiscreteHmm,
        log_exact: Option<f64>,
        /// `E[X_t | y_{1:T}]` at index `t - 1`, when the oracle applies.
        means: Option<Vec<f64>>,
        data: DiscreteDataset,
    },
}

pub struct Cell {
    pub index: usize,
    pub noise: Noise,
    pub model: CellModel,
}

impl Cell {
    pub fn build(spec: &ExperimentSpec, index: usize, noise: Noise) -> Result<Cell> {
        let exp = &spec.experiment;
        let mut rng = RngStream::new(exp.seed, data_stream(noise));
        let model = match (&spec.model, noise) {
            (ModelConfig::LinearGaussian(c), Some((nu2, tau2))) => {
                let cfg = c.with_noise(nu2, tau2);
                let data: LgDataset = match &exp.data {
                    Some(path) => read_lg(path)?,
                    None => simulate(&cfg.model()?, &mut rng, cfg.horizon)?.into(),
                };
                check_horizon(data.observations.len(), cfg.horizon)?;
                let hmm = cfg.hmm(data.observations.clone())?;
                let kalman = kalman_filter(hmm.model(), &data.observations)?;
                CellModel::LinearGaussian { hmm, kalman, data }
            }
            (ModelConfig::Discrete(c), None) => {
                let data: DiscreteDataset = match &exp.data {
                    Some(path) => read_discrete(path)?,
                    None => simulate(&c.model()?, &mut rng, c.horizon)?.into(),
                };
                check_horizon(data.observations.len(), c.horizon)?;
                let hmm = c.hmm(data.observations.clone())?;
                // Oracles are informational: when one does not apply (too many
                // paths, or data of zero probability) the truth columns stay empty.
                let log_exact = exact_likelihood(&hmm).ok().map(f64::ln);
                let means = (1..=c.horizon)
                    .map(|t| exact_smoothed_expectation(&hmm, t, |x| x as f64).ok())
                    .collect::<Option<Vec<_>>>();
                CellModel::Discrete { hmm, log_exact, means, data }
            }
            _ => return Err(CliError::Config("noise cell does not match the model kind".into())),
        };
        Ok(Cell { index, noise, model })
    }

    pub fn log_exact(&self) -> Option<f64> {
        match &self.model {
            CellModel::LinearGaussian { kalman, .. } => Some(kalman.log_marginal_likelihood),
            CellModel::Discrete { log_exact, .. } => *log_exact,
        }
    }

    pub fn truth(&self, t: usize) -> (Option<f64>, Option<f64>) {
        match &self.model {
            CellModel::LinearGaussian { kalman, .. } => {
                let m = kalman.smoothed[t - 1].mean;
                (Some(m[0]), Some(m[1]))
            }
            CellModel::Discrete { means, .. } => (means.as_ref().map(|m| m[t - 1]), None),
        }
    }

    fn blank_row(&self, t: usize, rep: usize, estimator: &str) -> ResultRow {
        let (truth_0, truth_1) = self.truth(t);
        ResultRow {
            nu2: self.noise.map(|n| n.0),
            tau2: self.noise.map(|n| n.1),
            t,
            replicate: rep,
            log_p_hat: None,
            log_p_kalman: self.log_exact(),
            ess_fwd_min: None,
            ess_bwd_min: None,
            smoothed_mean_0: None,
            smoothed_mean_1: None,
            truth_0,
            truth_1,
            estimator: estimator.to_string(),
            wall_ms: 0.0,
            error: None,
        }
    }
}

fn check_horizon(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(CliError::Config(format!("dataset has {found} observations, horizon is {expected}")));
    }
    Ok(())
}

fn lg_0(x: &Vector2<f64>) -> f64 {
    x[0]
}
fn lg_1(x: &Vector2<f64>) -> f64 {
    x[1]
}
fn state_value(x: &usize) -> f64 {
    *x as f64
}

fn min(xs: &[f64]) -> Option<f64> {
    xs.iter().copied().reduce(f64::min)
}

fn two_filter_row<M: HmmModel>(
    cell: &Cell,
    hmm: &M,
    phis: &[fn(&M::State) -> f64],
    spec: &ExperimentSpec,
    t: usize,
    rep: usize,
    timing: bool,
) -> ResultRow {
    let exp = &spec.experiment;
    let cfg = TwoFilterConfig {
        particles: exp.particles,
        meeting_time: t,
        beta: exp.beta,
        estimator: exp.estimator,
        resampling: exp.resampling,
    };
    let mut row = cell.blank_row(t, rep, exp.estimator.tag());
    let rng = RngStream::new(exp.seed, replicate_stream(cell.noise, t, rep));
    let result = if exp.estimator == Estimator::ForwardOnly {
        estimate(hmm, &rng, &cfg).map(|r| (r, Vec::new()))
    } else {
        smooth_expectations(hmm, &rng, &cfg, phis).map(|s| (s.report, s.expectations))
    };
    match result {
        Ok((report, means)) => {
            row.log_p_hat = Some(report.log_p_hat);
            row.ess_fwd_min = min(&report.ess_fwd_trace);
            row.ess_bwd_min = min(&report.ess_bwd_trace);
            row.smoothed_mean_0 = means.first().copied();
            row.smoothed_mean_1 = means.get(1).copied();
            if timing {
                row.wall_ms = report.wall_time_ms;
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// One backward-simulation replicate, summarized at every requested time.
fn ffbsi_rows<M: HmmModel>(
    cell: &Cell,
    hmm: &M,
    phis: &[fn(&M::State) -> f64],
    spec: &ExperimentSpec,
    t_list: &[usize],
    rep: usize,
    timing: bool,
) -> Vec<ResultRow> {
    let start = Instant::now();
    let exp = &spec.experiment;
    let rng = RngStream::new(exp.seed, ffbsi_stream(cell.noise, rep));
    let opts = FfbsiOptions {
        trajectories: exp.trajectories.unwrap_or(exp.particles),
        rejection_cap: exp.rejection_cap,
    };
    let filter = FilterOptions { particles: exp.particles, resampling: exp.resampling };
    let result = (|| {
        let bound = hmm
            .log_f_bound()
            .ok_or_else(|| SmcError::InvalidModel("transition density has no finite bound".into()))?;
        let fwd = run_forward(hmm, &mut rng.split(0), &filter, hmm.horizon(), false)?;
        let set = ffbsi_sample(hmm, &fwd, &rng.split(1), &opts, bound)?;
        Ok::<_, SmcError>((fwd, set))
    })();
    let wall = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    t_list
        .iter()
        .map(|&t| {
            let mut row = cell.blank_row(t, rep, "ffbsi");
            row.wall_ms = wall;
            match &result {
                Ok((fwd, set)) => {
                    row.log_p_hat = Some(fwd.log_nc);
                    row.ess_fwd_min = min(&fwd.ess_trace());
                    let means: Vec<f64> = phis.iter().map(|phi| ffbsi_expectation(set, t, phi)).collect();
                    row.smoothed_mean_0 = means.first().copied();
                    row.smoothed_mean_1 = means.get(1).copied();
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    TwoFilter,
    /// Two-filter rows paired with backward-simulation rows.
    CompareFfbsi,
}

/// Rows of one cell: meeting times outermost, then replicates; in
/// comparison mode each two-filter row is followed by its backward-simulation row.
pub fn cell_rows(cell: &Cell, spec: &ExperimentSpec, mode: Mode, pool: &ThreadPool, timing: bool) -> Result<Vec<ResultRow>> {
    let t_list = spec.t_list()?;
    let reps = spec.experiment.replicates;
    let tasks: Vec<(usize, usize)> = t_list.iter().flat_map(|&t| (0..reps).map(move |r| (t, r))).collect();
    let run = |&(t, r): &(usize, usize)| match &cell.model {
        CellModel::LinearGaussian { hmm, .. } => two_filter_row(cell, hmm, &[lg_0, lg_1], spec, t, r, timing),
        CellModel::Discrete { hmm, .. } => two_filter_row(cell, hmm, &[state_value], spec, t, r, timing),
    };
    let rows: Vec<ResultRow> = pool.install(|| tasks.par_iter().map(run).collect());
    if mode == Mode::TwoFilter {
        return Ok(rows);
    }
    let ffbsi: Vec<Vec<ResultRow>> = pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| match &cell.model {
                CellModel::LinearGaussian { hmm, .. } => ffbsi_rows(cell, hmm, &[lg_0, lg_1], spec, &t_list, r, timing),
                CellModel::Discrete { hmm, .. } => ffbsi_rows(cell, hmm, &[state_value], spec, &t_list, r, timing),
            })
            .collect()
    });
    let mut out = Vec::with_capacity(2 * rows.len());
    for (k, row) in rows.into_iter().enumerate() {
        let (ti, r) = (k / reps, k % reps);
        out.push(row);
        out.push(ffbsi[r][ti].clone());
    }
    Ok(out)
}

pub fn thread_pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}
