//! Observation records on disk.
//!
//! Linear Gaussian records have columns `n,y,x_0,x_1`; finite-state records
//! have `n,y,x`. Row `n = 0` carries the initial state and an empty `y`.
//! State columns are optional on input.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector2;
use tfsmc::Trajectory;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S, O> {
    pub observations: Vec<O>,
    /// `x_0..=x_T` when known.
    pub states: Option<Vec<S>>,
}

impl<S, O> From<Trajectory<S, O>> for Dataset<S, O> {
    fn from(t: Trajectory<S, O>) -> Self {
        Dataset {
            observations: t.observations,
            states: Some(t.states),
        }
    }
}

pub type LgDataset = Dataset<Vector2<f64>, f64>;
pub type DiscreteDataset = Dataset<usize, usize>;

fn bad(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

fn read_rows(path: &Path, reader: impl Read, width: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(CliError::csv(path))?;
        let n: usize = rec.get(0).unwrap_or("").parse().map_err(|_| bad(path, "bad time index"))?;
        if n != rows.len() {
            return Err(bad(path, format!("expected time index {}, found {n}", rows.len())));
        }
        let fields: Vec<String> = (1..=width).map(|i| rec.get(i).unwrap_or("").to_string()).collect();
        rows.push((n, fields));
    }
    if rows.len() < 2 {
        return Err(bad(path, "no observations"));
    }
    Ok(rows)
}

fn parse<T: std::str::FromStr>(path: &Path, n: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| bad(path, format!("unparsable value {s:?} at n = {n}")))
}

/// States are kept only when every row, including `n = 0`, has them.
fn collect<S, O>(
    path: &Path,
    rows: &[(usize, Vec<String>)],
    obs: impl Fn(usize, &str) -> Result<O>,
    state: impl Fn(usize, &[String]) -> Result<Option<S>>,
) -> Result<Dataset<S, O>> {
    let observations = rows[1..].iter().map(|(n, f)| obs(*n, &f[0])).collect::<Result<Vec<_>>>()?;
    let states = rows.iter().map(|(n, f)| state(*n, &f[1..])).collect::<Result<Option<Vec<_>>>>()?;
    if !rows[0].1[0].is_empty() {
        return Err(bad(path, "row n = 0 must have an empty observation"));
    }
    Ok(Dataset { observations, states })
}

pub fn read_lg(path: &Path) -> Result<LgDataset> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    let rows = read_rows(path, file, 3)?;
    collect(
        path,
        &rows,
        |n, y| parse(path, n, y),
        |n, f| {
            if f.iter().any(String::is_empty) {
                return Ok(None);
            }
            Ok(Some(Vector2::new(parse(path, n, &f[0])?, parse(path, n, &f[1])?)))
        },
    )
}

pub fn read_discrete(path: &Path) -> Result<DiscreteDataset> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    let rows = read_rows(path, file, 2)?;
    collect(
        path,
        &rows,
        |n, y| parse(path, n, y),
        |n, f| if f[0].is_empty() { Ok(None) } else { parse(path, n, &f[0]).map(Some) },
    )
}

fn write_rows(
    path: &Path,
    out: impl Write,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(CliError::csv(path))?;
    for r in rows {
        w.write_record(&r).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn write_lg(path: &Path, out: impl Write, data: &LgDataset) -> Result<()> {
    let rows = (0..=data.observations.len()).map(|n| {
        let y = if n == 0 { String::new() } else { data.observations[n - 1].to_string() };
        let (x0, x1) = match &data.states {
            Some(s) => (s[n][0].to_string(), s[n][1].to_string()),
            None => (String::new(), String::new()),
        };
        vec![n.to_string(), y, x0, x1]
    });
    write_rows(path, out, &["n", "y", "x_0", "x_1"], rows)
}

pub fn write_discrete(path: &Path, out: impl Write, data: &DiscreteDataset) -> Result<()> {
    let rows = (0..=data.observations.len()).map(|n| {
        let y = if n == 0 { String::new() } else { data.observations[n - 1].to_string() };
        let x = data.states.as_ref().map(|s| s[n].to_string()).unwrap_or_default();
        vec![n.to_string(), y, x]
    });
    write_rows(path, out, &["n", "y", "x"], rows)
}
