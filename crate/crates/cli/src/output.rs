//! Result files: the row CSV, a JSON sidecar describing the run, a manifest
//! of completed cells (with the CSV length after each) used to resume, and a
//! per-time summary.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::runner::ResultRow;
use crate::spec::ExperimentSpec;

pub const VERSION: &str = env!("TFSMC_GIT_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub command: String,
    pub version: String,
    pub crate_version: String,
    pub cells: usize,
    pub t_list: Vec<usize>,
    pub spec: ExperimentSpec,
}

pub struct OutputPaths {
    pub rows: PathBuf,
    pub sidecar: PathBuf,
    pub manifest: PathBuf,
    pub summary: PathBuf,
}

impl OutputPaths {
    pub fn new(rows: &Path) -> Self {
        let stem = rows.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
        let sibling = |suffix: &str| rows.with_file_name(format!("{stem}{suffix}"));
        OutputPaths {
            rows: rows.to_path_buf(),
            sidecar: sibling(".json"),
            manifest: sibling(".manifest"),
            summary: sibling(".summary.csv"),
        }
    }
}

/// Completed cells and the CSV length after each, in completion order.
fn read_manifest(path: &Path) -> Result<Vec<(usize, u64)>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            let cell = it.next().and_then(|s| s.parse().ok());
            let offset = it.next().and_then(|s| s.parse().ok());
            cell.zip(offset)
                .ok_or_else(|| CliError::Config(format!("{}: malformed manifest line {l:?}", path.display())))
        })
        .collect()
}

/// Appends rows cell by cell and records each completed cell.
pub struct RowWriter {
    paths: OutputPaths,
    csv: csv::Writer<File>,
    manifest: File,
    done: Vec<usize>,
}

impl RowWriter {
    /// Fresh output, or, with `resume`, continue after the last recorded
    /// cell. Resuming requires the recorded run description to match.
    pub fn open(paths: OutputPaths, sidecar: &Sidecar, resume: bool) -> Result<RowWriter> {
        if resume && paths.manifest.exists() && paths.sidecar.exists() {
            let text = std::fs::read_to_string(&paths.sidecar).map_err(CliError::io(&paths.sidecar))?;
            let old: Sidecar = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", paths.sidecar.display())))?;
            if old.spec != sidecar.spec || old.command != sidecar.command {
                return Err(CliError::Config(format!(
                    "{} describes a different run; refusing to resume",
                    paths.sidecar.display()
                )));
            }
            let entries = read_manifest(&paths.manifest)?;
            if let Some(&(_, offset)) = entries.last() {
                let file = OpenOptions::new().write(true).open(&paths.rows).map_err(CliError::io(&paths.rows))?;
                // Drop rows of a cell that was interrupted mid-write.
                file.set_len(offset).map_err(CliError::io(&paths.rows))?;
                drop(file);
                let rows = OpenOptions::new().append(true).open(&paths.rows).map_err(CliError::io(&paths.rows))?;
                let manifest =
                    OpenOptions::new().append(true).open(&paths.manifest).map_err(CliError::io(&paths.manifest))?;
                let csv = csv::WriterBuilder::new().has_headers(false).from_writer(rows);
                let done = entries.into_iter().map(|e| e.0).collect();
                return Ok(RowWriter { paths, csv, manifest, done });
            }
        }
        if let Some(dir) = paths.rows.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        }
        let json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
        std::fs::write(&paths.sidecar, json + "\n").map_err(CliError::io(&paths.sidecar))?;
        let manifest = File::create(&paths.manifest).map_err(CliError::io(&paths.manifest))?;
        let rows = File::create(&paths.rows).map_err(CliError::io(&paths.rows))?;
        let csv = csv::Writer::from_writer(rows);
        Ok(RowWriter { paths, csv, manifest, done: Vec::new() })
    }

    pub fn is_done(&self, cell: usize) -> bool {
        self.done.contains(&cell)
    }

    pub fn write_cell(&mut self, cell: usize, rows: &[ResultRow]) -> Result<()> {
        let path = &self.paths.rows;
        for row in rows {
            self.csv.serialize(row).map_err(CliError::csv(path))?;
        }
        self.csv.flush().map_err(CliError::io(path))?;
        let offset = self.csv.get_ref().metadata().map_err(CliError::io(path))?.len();
        writeln!(self.manifest, "{cell} {offset}").map_err(CliError::io(&self.paths.manifest))?;
        self.manifest.flush().map_err(CliError::io(&self.paths.manifest))?;
        self.done.push(cell);
        Ok(())
    }

    pub fn paths(&self) -> &OutputPaths {
        &self.paths
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
    rdr.deserialize().map(|r| r.map_err(CliError::csv(path))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub nu2: Option<f64>,
    pub tau2: Option<f64>,
    pub estimator: String,
    pub t: usize,
    pub replicates: usize,
    pub failed: usize,
    pub mean_log_p_hat: Option<f64>,
    pub var_log_p_hat: Option<f64>,
    pub log_p_kalman: Option<f64>,
    /// Variance relative to the previous meeting time of the same cell and estimator.
    pub var_ratio: Option<f64>,
    pub mean_smoothed_0: Option<f64>,
    pub sd_smoothed_0: Option<f64>,
    pub mean_smoothed_1: Option<f64>,
    pub sd_smoothed_1: Option<f64>,
    pub truth_0: Option<f64>,
    pub truth_1: Option<f64>,
}

/// Sample mean and unbiased variance of the present values.
pub fn mean_var(xs: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = xs.flatten().collect();
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = (v.len() > 1).then(|| v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0));
    (Some(mean), var)
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    type Key = (Option<u64>, Option<u64>, String, usize);
    let key = |r: &ResultRow| -> Key { (r.nu2.map(f64::to_bits), r.tau2.map(f64::to_bits), r.estimator.clone(), r.t) };
    let mut keys: Vec<Key> = Vec::new();
    for r in rows {
        let k = key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out: Vec<SummaryRow> = Vec::with_capacity(keys.len());
    for k in keys {
        let group: Vec<&ResultRow> = rows.iter().filter(|r| key(r) == k).collect();
        let first = group[0];
        let (mean, var) = mean_var(group.iter().map(|r| r.log_p_hat));
        let (m0, v0) = mean_var(group.iter().map(|r| r.smoothed_mean_0));
        let (m1, v1) = mean_var(group.iter().map(|r| r.smoothed_mean_1));
        let base = out
            .iter()
            .rev()
            .find(|s| s.nu2 == first.nu2 && s.tau2 == first.tau2 && s.estimator == first.estimator)
            .and_then(|s| s.var_log_p_hat);
        out.push(SummaryRow {
            nu2: first.nu2,
            tau2: first.tau2,
            estimator: first.estimator.clone(),
            t: first.t,
            replicates: group.len(),
            failed: group.iter().filter(|r| r.error.is_some()).count(),
            mean_log_p_hat: mean,
            var_log_p_hat: var,
            log_p_kalman: first.log_p_kalman,
            var_ratio: match (var, base) {
                (Some(v), Some(b)) => Some(v / b),
                _ => None,
            },
            mean_smoothed_0: m0,
            sd_smoothed_0: v0.map(f64::sqrt),
            mean_smoothed_1: m1,
            sd_smoothed_1: v1.map(f64::sqrt),
            truth_0: first.truth_0,
            truth_1: first.truth_1,
        });
    }
    out
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
    for r in rows {
        w.serialize(r).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize, rep: usize, log_p_hat: f64) -> ResultRow {
        ResultRow {
            nu2: Some(1.0),
            tau2: Some(2.0),
            t,
            replicate: rep,
            log_p_hat: Some(log_p_hat),
            log_p_kalman: Some(0.0),
            ess_fwd_min: None,
            ess_bwd_min: None,
            smoothed_mean_0: None,
            smoothed_mean_1: None,
            truth_0: None,
            truth_1: None,
            estimator: "n".into(),
            wall_ms: 0.0,
            error: None,
        }
    }

    #[test]
    fn variance_ratio_is_against_previous_time() {
        let rows = vec![row(3, 0, 0.0), row(3, 1, 2.0), row(5, 0, 0.0), row(5, 1, 4.0), row(7, 0, 1.0), row(7, 1, 1.0)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].var_log_p_hat, Some(2.0));
        assert_eq!(s[0].var_ratio, None);
        assert_eq!(s[1].var_ratio, Some(4.0));
        assert_eq!(s[2].var_ratio, Some(0.0));
        assert_eq!(s[1].mean_log_p_hat, Some(2.0));
    }

    #[test]
    fn paths_share_the_stem() {
        let p = OutputPaths::new(Path::new("out/run.csv"));
        assert_eq!(p.manifest, Path::new("out/run.manifest"));
        assert_eq!(p.summary, Path::new("out/run.summary.csv"));
        assert_eq!(p.sidecar, Path::new("out/run.json"));
    }
}
