//! Experiment driver for the `tfsmc` estimators: experiment files,
//! observation records, replicated runs over noise grids, and result files.

pub mod commands;
pub mod data;
pub mod error;
pub mod output;
pub mod runner;
pub mod spec;

pub use commands::{estimate_cmd, run_cells, simulate_cmd, validate_cmd, Check, Overrides, RunOptions, RunOutcome};
pub use error::{CliError, Result};
pub use output::{read_rows, summarize, OutputPaths, SummaryRow};
pub use runner::{Mode, ResultRow};
pub use spec::{ExperimentConfig, ExperimentSpec};
