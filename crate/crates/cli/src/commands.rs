use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::Serialize;
use tfsmc::density_check::{check_discrete, check_linear_gaussian};
use tfsmc::oracle::{
    exact_backward_nc, exact_likelihood, exact_smoothed_marginal, exhaustive_backward_nc, exhaustive_likelihood,
    exhaustive_smoothed_marginal,
};
use tfsmc::{
    kalman_filter, quadrature_smoother, simulate, smooth_expectations, BetaScheme, DiscreteHmm, DiscreteModel,
    DiscreteXi, EstimateReport, Estimator, HmmModel, LinearGaussianHmm, LinearGaussianModel, ModelConfig,
    ProposalKind, QuadratureOptions, RngStream, TwoFilterConfig, XiChoice,
};

use crate::data::{write_discrete, write_lg};
use crate::error::{CliError, Result};
use crate::output::{read_rows, summarize, write_summary, OutputPaths, RowWriter, Sidecar, VERSION};
use crate::runner::{cell_rows, replicate_stream, thread_pool, Cell, CellModel, Mode};
use crate::spec::ExperimentSpec;

/// Command-line settings that take precedence over the experiment file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub estimator: Option<Estimator>,
    pub beta: Option<BetaScheme>,
    pub data: Option<PathBuf>,
    pub t: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        let exp = &mut spec.experiment;
        if let Some(s) = self.seed {
            exp.seed = s;
        }
        if let Some(e) = self.estimator {
            exp.estimator = e;
        }
        if let Some(b) = self.beta {
            exp.beta = b;
        }
        if let Some(d) = &self.data {
            exp.data = Some(d.clone());
        }
        if let Some(t) = self.t {
            exp.t_list = Some(vec![t]);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub out: PathBuf,
    pub resume: bool,
    pub stop_after_cells: Option<usize>,
    pub timing: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOutcome {
    pub rows: usize,
    pub failed: usize,
    pub cells_run: usize,
    pub cells_skipped: usize,
    pub complete: bool,
}

fn single_cell(spec: &ExperimentSpec, command: &str) -> Result<Cell> {
    let cells = spec.cells()?;
    if cells.len() != 1 {
        return Err(CliError::Config(format!("{command} runs a single cell; use grid for noise grids")));
    }
    Cell::build(spec, 0, cells[0])
}

pub fn simulate_cmd(spec: &ExperimentSpec, out: Option<&Path>) -> Result<()> {
    let cell = single_cell(spec, "simulate")?;
    let label = out.unwrap_or(Path::new("<stdout>"));
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(CliError::io(p))?),
        None => Box::new(std::io::stdout().lock()),
    };
    match &cell.model {
        CellModel::LinearGaussian { data, .. } => write_lg(label, sink, data),
        CellModel::Discrete { data, .. } => write_discrete(label, sink, data),
    }
}

#[derive(Debug, Serialize)]
pub struct EstimateOutput {
    pub report: EstimateReport,
    pub log_p_exact: Option<f64>,
    pub smoothed_means: Vec<f64>,
    pub truth: Vec<f64>,
    pub version: String,
}

/// Replicate 0 of the experiment at a single meeting time (default `T / 2`).
pub fn estimate_cmd(spec: &ExperimentSpec) -> Result<EstimateOutput> {
    let cell = single_cell(spec, "estimate")?;
    let exp = &spec.experiment;
    let t = match &exp.t_list {
        Some(list) if list.len() == 1 => list[0],
        Some(_) => return Err(CliError::Config("estimate takes a single meeting time".into())),
        None => {
            let (lo, hi) = exp
                .estimator
                .meeting_range(spec.horizon())
                .ok_or_else(|| CliError::Config("horizon too short for the estimator".into()))?;
            (spec.horizon() / 2).clamp(lo, hi)
        }
    };
    let cfg = TwoFilterConfig {
        particles: exp.particles,
        meeting_time: t,
        beta: exp.beta,
        estimator: exp.estimator,
        resampling: exp.resampling,
    };
    let rng = RngStream::new(exp.seed, replicate_stream(cell.noise, t, 0));
    let (report, smoothed_means) = match (&cell.model, exp.estimator) {
        (CellModel::LinearGaussian { hmm, .. }, Estimator::ForwardOnly) => (tfsmc::estimate(hmm, &rng, &cfg)?, vec![]),
        (CellModel::Discrete { hmm, .. }, Estimator::ForwardOnly) => (tfsmc::estimate(hmm, &rng, &cfg)?, vec![]),
        (CellModel::LinearGaussian { hmm, .. }, _) => {
            let s = smooth_expectations(hmm, &rng, &cfg, &[|x: &Vector2<f64>| x[0], |x: &Vector2<f64>| x[1]])?;
            (s.report, s.expectations)
        }
        (CellModel::Discrete { hmm, .. }, _) => {
            let s = smooth_expectations(hmm, &rng, &cfg, &[|x: &usize| *x as f64])?;
            (s.report, s.expectations)
        }
    };
    let (a, b) = cell.truth(t);
    Ok(EstimateOutput {
        report,
        log_p_exact: cell.log_exact(),
        smoothed_means,
        truth: a.into_iter().chain(b).collect(),
        version: VERSION.to_string(),
    })
}

/// Runs every cell in order, skipping cells already recorded when resuming.
pub fn run_cells(spec: &ExperimentSpec, command: &str, mode: Mode, opts: &RunOptions) -> Result<RunOutcome> {
    spec.validate()?;
    let cells = spec.cells()?;
    if command == "sweep-t" && cells.len() != 1 {
        return Err(CliError::Config("sweep-t runs a single cell; use grid for noise grids".into()));
    }
    if mode == Mode::CompareFfbsi && spec.experiment.estimator == Estimator::ForwardOnly {
        return Err(CliError::Config("compare-ffbsi needs a two-filter estimator".into()));
    }
    let sidecar = Sidecar {
        command: command.to_string(),
        version: VERSION.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        cells: cells.len(),
        t_list: spec.t_list()?,
        spec: spec.clone(),
    };
    let pool = thread_pool(opts.workers)?;
    let mut writer = RowWriter::open(OutputPaths::new(&opts.out), &sidecar, opts.resume)?;
    let mut outcome = RunOutcome::default();
    for (index, noise) in cells.iter().enumerate() {
        if writer.is_done(index) {
            outcome.cells_skipped += 1;
            continue;
        }
        if opts.stop_after_cells.is_some_and(|k| outcome.cells_run >= k) {
            break;
        }
        let start = std::time::Instant::now();
        let cell = Cell::build(spec, index, *noise)?;
        let rows = cell_rows(&cell, spec, mode, &pool, opts.timing)?;
        writer.write_cell(index, &rows)?;
        outcome.cells_run += 1;
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        let label = noise.map(|(a, b)| format!(" (nu2 = {a}, tau2 = {b})")).unwrap_or_default();
        eprintln!(
            "cell {}/{}{label}: {} rows, {failed} failed, {:.1} s",
            index + 1,
            cells.len(),
            rows.len(),
            start.elapsed().as_secs_f64()
        );
    }
    let paths = writer.paths();
    let rows = read_rows(&paths.rows)?;
    write_summary(&paths.summary, &summarize(&rows))?;
    outcome.rows = rows.len();
    outcome.failed = rows.iter().filter(|r| r.error.is_some()).count();
    outcome.complete = outcome.cells_run + outcome.cells_skipped == cells.len();
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, err: f64, tol: f64) -> Check {
    Check {
        name: name.to_string(),
        passed: err <= tol,
        detail: format!("error {err:.3e}, tolerance {tol:.0e}"),
    }
}

fn failed_check(name: &str, e: impl std::fmt::Display) -> Check {
    Check { name: name.to_string(), passed: false, detail: e.to_string() }
}

fn discrete_checks(hmm: &DiscreteHmm, label: &str, out: &mut Vec<Check>) {
    let horizon = hmm.horizon();
    match (exact_likelihood(hmm), exhaustive_likelihood(hmm)) {
        (Ok(a), Ok(b)) => out.push(check(&format!("{label}: forward recursion vs path sum"), (a - b).abs() / b, 1e-12)),
        (Err(e), _) | (_, Err(e)) => out.push(failed_check(&format!("{label}: forward recursion vs path sum"), e)),
    }
    let mut worst = 0.0f64;
    let mut worst_nc = 0.0f64;
    for t in 1..=horizon {
        match (exact_smoothed_marginal(hmm, t), exhaustive_smoothed_marginal(hmm, t)) {
            (Ok(a), Ok(b)) => {
                worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
            }
            (Err(e), _) | (_, Err(e)) => return out.push(failed_check(&format!("{label}: smoothed marginals"), e)),
        }
        match (exact_backward_nc(hmm, t), exhaustive_backward_nc(hmm, t)) {
            (Ok(a), Ok(b)) => worst_nc = worst_nc.max((a - b).abs() / b),
            (Err(e), _) | (_, Err(e)) => return out.push(failed_check(&format!("{label}: backward constants"), e)),
        }
    }
    out.push(check(&format!("{label}: smoothed marginals vs path sum"), worst, 1e-12));
    out.push(check(&format!("{label}: backward constants vs path sum"), worst_nc, 1e-12));
    let report = check_discrete(hmm, 1e-12);
    out.push(Check {
        name: format!("{label}: tables and proposals normalized"),
        passed: report.passed(),
        detail: format!("{} checks, {} failed", report.checks.len(), report.failures().count()),
    });
}

fn lg_checks(model: &LinearGaussianModel, ys: &[f64], label: &str, out: &mut Vec<Check>) {
    let horizon = ys.len().min(5);
    let ys = &ys[..horizon];
    let result = (|| {
        let kf = kalman_filter(model, ys)?;
        let quad = quadrature_smoother(model, ys, &QuadratureOptions::for_model(model))?;
        Ok::<_, tfsmc::SmcError>((kf, quad))
    })();
    match result {
        Ok((kf, quad)) => {
            out.push(check(
                &format!("{label}: Kalman log-likelihood vs quadrature"),
                (kf.log_marginal_likelihood - quad.log_marginal_likelihood).abs(),
                1e-4,
            ));
            let err = (0..horizon)
                .map(|n| (kf.smoothed[n].mean - quad.smoothed[n].0).amax())
                .fold(0.0, f64::max);
            out.push(check(&format!("{label}: RTS means vs quadrature"), err, 1e-4));
            let err = (0..horizon)
                .map(|n| (kf.smoothed[n].cov - quad.smoothed[n].1).amax())
                .fold(0.0, f64::max);
            out.push(check(&format!("{label}: RTS covariances vs quadrature"), err, 1e-4));
        }
        Err(e) => out.push(failed_check(&format!("{label}: Kalman vs quadrature"), e)),
    }
    for kind in [ProposalKind::Adapted, ProposalKind::Prior] {
        let name = format!("{label}: densities integrate to one ({kind:?} proposals)");
        match LinearGaussianHmm::new(model.clone(), ys.to_vec(), XiChoice::KalmanPredictive, kind) {
            Ok(hmm) => {
                let times: Vec<usize> = (1..=horizon).collect();
                let report =
                    check_linear_gaussian(&hmm, &mut RngStream::new(5, 5), &Vector2::zeros(), &times, 401, 1e-5);
                out.push(Check {
                    name,
                    passed: report.passed(),
                    detail: format!("{} checks, {} failed", report.checks.len(), report.failures().count()),
                });
            }
            Err(e) => out.push(failed_check(&name, e)),
        }
    }
}

/// Oracle self-checks on fixed reference models, plus the configured model when given.
pub fn validate_cmd(spec: Option<&ExperimentSpec>) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = RngStream::new(7, 0);
    let model = DiscreteModel::random(&mut rng, 3, 2)?;
    let traj = simulate(&model, &mut rng, 5)?;
    for xi in [DiscreteXi::Uniform, DiscreteXi::Predictive] {
        let label = format!("reference 3-state, xi {xi:?}");
        let hmm = DiscreteHmm::new(model.clone(), traj.observations.clone(), xi, ProposalKind::Adapted)?;
        discrete_checks(&hmm, &label, &mut out);
    }
    let model = LinearGaussianModel::tracking(1.0, 1.0)?;
    let traj = simulate(&model, &mut RngStream::new(42, 0), 5)?;
    lg_checks(&model, &traj.observations, "reference tracking (1, 1)", &mut out);

    if let Some(spec) = spec {
        for (index, noise) in spec.cells()?.into_iter().enumerate() {
            let cell = Cell::build(spec, index, noise)?;
            match (&cell.model, &spec.model) {
                (CellModel::LinearGaussian { hmm, data, .. }, ModelConfig::LinearGaussian(_)) => {
                    let (a, b) = noise.unwrap_or_default();
                    lg_checks(hmm.model(), &data.observations, &format!("configured ({a}, {b})"), &mut out);
                }
                (CellModel::Discrete { hmm, .. }, _) => {
                    // Path enumeration is only feasible on short prefixes.
                    let horizon = hmm.horizon().min(6);
                    let model = hmm.model().clone();
                    let prefix = hmm.observations()[..horizon].to_vec();
                    let short = DiscreteHmm::new(model, prefix, DiscreteXi::Predictive, hmm.proposals())?;
                    discrete_checks(&short, "configured", &mut out);
                }
                _ => unreachable!("cells follow the model kind"),
            }
        }
    }
    Ok(out)
}
