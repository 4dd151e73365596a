use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tfsmc::{BetaScheme, Estimator};
use tfsmc_cli::{
    estimate_cmd, run_cells, simulate_cmd, validate_cmd, CliError, ExperimentSpec, Mode, Overrides, RunOptions,
};

#[derive(Parser)]
#[command(name = "tfsmc", version = env!("TFSMC_GIT_VERSION"), about = "Two-filter SMC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replicates
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Output path; results CSV for sweep-t, grid and compare-ffbsi
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// n2, n or forward-only
    #[arg(long, global = true, value_parser = parse_estimator)]
    estimator: Option<Estimator>,

    /// uniform or proportional
    #[arg(long, global = true, value_parser = parse_beta)]
    beta: Option<BetaScheme>,

    /// Observation record to use instead of simulated data
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Write zero in the wall_ms column so output is reproducible byte for byte
    #[arg(long, global = true)]
    no_timing: bool,

    /// Continue a run whose manifest lists completed cells
    #[arg(long, global = true)]
    resume: bool,

    /// Stop after running this many cells
    #[arg(long, global = true)]
    stop_after_cells: Option<usize>,

    /// Single meeting time, replacing the experiment's list
    #[arg(long, global = true)]
    t: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write the simulated observation record
    Simulate,
    /// One likelihood estimate with its decomposition, as JSON
    Estimate,
    /// Replicated estimates at each meeting time
    SweepT,
    /// Replicated estimates over the noise grid
    Grid,
    /// Two-filter smoothing next to backward simulation
    CompareFfbsi,
    /// Oracle self-checks
    Validate,
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown estimator {s:?}"))
}

fn parse_beta(s: &str) -> Result<BetaScheme, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown pairing scheme {s:?}"))
}

fn load(cli: &Cli) -> Result<ExperimentSpec, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut spec = ExperimentSpec::load(path)?;
    Overrides {
        seed: cli.seed,
        estimator: cli.estimator,
        beta: cli.beta,
        data: cli.data.clone(),
        t: cli.t,
    }
    .apply(&mut spec);
    spec.validate()?;
    Ok(spec)
}

fn write_json(out: Option<&PathBuf>, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("output serializes") + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io { path: p.clone(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate => simulate_cmd(&load(cli)?, cli.out.as_deref()),
        Command::Estimate => write_json(cli.out.as_ref(), &estimate_cmd(&load(cli)?)?),
        Command::SweepT | Command::Grid | Command::CompareFfbsi => {
            let spec = load(cli)?;
            let (name, mode) = match cli.command {
                Command::SweepT => ("sweep-t", Mode::TwoFilter),
                Command::Grid => ("grid", Mode::TwoFilter),
                _ => ("compare-ffbsi", Mode::CompareFfbsi),
            };
            let opts = RunOptions {
                workers: cli.workers.max(1),
                out: cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.csv"))),
                resume: cli.resume,
                stop_after_cells: cli.stop_after_cells,
                timing: !cli.no_timing,
            };
            let outcome = run_cells(&spec, name, mode, &opts)?;
            eprintln!(
                "{} rows ({} failed) in {}; {} cells run, {} resumed{}",
                outcome.rows,
                outcome.failed,
                opts.out.display(),
                outcome.cells_run,
                outcome.cells_skipped,
                if outcome.complete { "" } else { "; incomplete" }
            );
            match outcome.failed {
                0 => Ok(()),
                f if f == outcome.rows => Err(CliError::AllFailed(f)),
                f => Err(CliError::PartialFailure { failed: f, total: outcome.rows }),
            }
        }
        Command::Validate => {
            let spec = match &cli.config {
                Some(_) => Some(load(cli)?),
                None => None,
            };
            let checks = validate_cmd(spec.as_ref())?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            match checks.iter().filter(|c| !c.passed).count() {
                0 => Ok(()),
                n => Err(CliError::Validation(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
