use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use tfsmc_cli::{read_rows, ExperimentSpec};

const SMALL_GRID: &str = r#"
[model]
kind = "linear-gaussian"
nu2 = 1.0
tau2 = 1.0
horizon = 12

[experiment]
particles = 40
replicates = 3
nu2_grid = [1.0, 4.0]
tau2_grid = [0.5, 2.0]
t_list = [3, 6]
seed = 11
"#;

const IMPOSSIBLE: &str = r#"
[model]
kind = "discrete"
horizon = 6
transition = [[0.5, 0.5], [0.5, 0.5]]
emission = [[1.0, 0.0], [1.0, 0.0]]

[experiment]
particles = 20
replicates = 2
t_list = [3]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tfsmc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn grid(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["grid", "--config", s(cfg), "--out", s(out), "--no-timing"];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn grid_has_one_row_per_cell_time_and_replicate() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "g.toml", SMALL_GRID);
    let out = dir.path().join("g.csv");
    let o = grid(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out).unwrap();
    assert_eq!(rows.len(), 4 * 2 * 3);
    assert!(rows.iter().all(|r| r.error.is_none() && r.log_p_hat.is_some()));
    assert_eq!((rows[0].nu2, rows[0].tau2, rows[0].t, rows[0].replicate), (Some(1.0), Some(0.5), 3, 0));
    assert_eq!((rows[23].nu2, rows[23].tau2, rows[23].t, rows[23].replicate), (Some(4.0), Some(2.0), 6, 2));
    let summary = std::fs::read_to_string(dir.path().join("g.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4 * 2);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(sidecar["command"], "grid");
    assert!(sidecar["version"].as_str().is_some_and(|v| !v.is_empty()));
    let spec: ExperimentSpec = serde_json::from_value(sidecar["spec"].clone()).unwrap();
    assert_eq!(spec.experiment.replicates, 3);
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "g.toml", SMALL_GRID);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(grid(&cfg, &a, &["--workers", "1"]).status.success());
    assert!(grid(&cfg, &b, &["--workers", "4"]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.summary.csv")).unwrap(),
        std::fs::read(dir.path().join("b.summary.csv")).unwrap()
    );
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "g.toml", SMALL_GRID);
    let full = dir.path().join("full.csv");
    let part = dir.path().join("part.csv");
    assert!(grid(&cfg, &full, &[]).status.success());
    let o = grid(&cfg, &part, &["--stop-after-cells", "2"]);
    assert!(o.status.success());
    assert_eq!(read_rows(&part).unwrap().len(), 2 * 2 * 3);
    // A cell interrupted mid-write leaves a partial tail.
    let mut bytes = std::fs::read(&part).unwrap();
    bytes.extend_from_slice(b"4.0,0.5,3,0,-1.5,");
    std::fs::write(&part, bytes).unwrap();
    let o = grid(&cfg, &part, &["--resume", "--stop-after-cells", "1"]);
    assert!(o.status.success());
    let o = grid(&cfg, &part, &["--resume", "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&part).unwrap());
}

#[test]
fn resume_refuses_a_different_experiment() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "g.toml", SMALL_GRID);
    let out = dir.path().join("g.csv");
    assert!(grid(&cfg, &out, &["--stop-after-cells", "1"]).status.success());
    let o = grid(&cfg, &out, &["--resume", "--seed", "12"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_and_feeds_back() {
    let dir = TempDir::new().unwrap();
    let text = SMALL_GRID.replace("nu2_grid = [1.0, 4.0]\ntau2_grid = [0.5, 2.0]\n", "");
    let cfg = write(dir.path(), "one.toml", &text);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&b)]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 1 + 13);

    // Feeding the record back reproduces the run on internally simulated data.
    let own = dir.path().join("own.csv");
    let fed = dir.path().join("fed.csv");
    assert!(run(&["sweep-t", "--config", s(&cfg), "--out", s(&own), "--no-timing"]).status.success());
    let o = run(&["sweep-t", "--config", s(&cfg), "--out", s(&fed), "--no-timing", "--data", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&own).unwrap(), std::fs::read(&fed).unwrap());

    let other = dir.path().join("c.csv");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&other), "--seed", "12"]).status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&other).unwrap());
}

#[test]
fn estimate_matches_first_replicate_of_sweep() {
    let dir = TempDir::new().unwrap();
    let text = SMALL_GRID.replace("nu2_grid = [1.0, 4.0]\ntau2_grid = [0.5, 2.0]\n", "");
    let cfg = write(dir.path(), "one.toml", &text);
    let json = dir.path().join("e.json");
    for estimator in ["n", "n2"] {
        let o = run(&["estimate", "--config", s(&cfg), "--t", "6", "--estimator", estimator, "--out", s(&json)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        let r = &v["report"];
        let sum = r["log_fwd_nc"].as_f64().unwrap() + r["log_bwd_nc"].as_f64().unwrap()
            + r["log_combine_term"].as_f64().unwrap();
        assert_eq!(r["log_p_hat"].as_f64().unwrap(), sum);

        let out = dir.path().join("sweep.csv");
        let o = run(&["sweep-t", "--config", s(&cfg), "--t", "6", "--estimator", estimator, "--out", s(&out)]);
        assert!(o.status.success());
        let rows = read_rows(&out).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].log_p_hat, r["log_p_hat"].as_f64());
        assert_eq!(rows[0].smoothed_mean_1, v["smoothed_means"][1].as_f64());
        assert_eq!(rows[0].log_p_kalman, v["log_p_exact"].as_f64());
    }
}

#[test]
fn compare_ffbsi_pairs_rows() {
    let dir = TempDir::new().unwrap();
    let text = SMALL_GRID.replace("nu2_grid = [1.0, 4.0]\ntau2_grid = [0.5, 2.0]\n", "").replace("replicates = 3", "replicates = 1");
    let cfg = write(dir.path(), "one.toml", &text);
    let out = dir.path().join("c.csv");
    let o = run(&["compare-ffbsi", "--config", s(&cfg), "--t", "6", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].estimator, "n");
    assert_eq!(rows[1].estimator, "ffbsi");
    assert_eq!(rows[0].truth_0, rows[1].truth_0);
    assert!(rows.iter().all(|r| r.smoothed_mean_0.is_some() && r.smoothed_mean_1.is_some()));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(run(&["grid", "--out", s(&out)]).status.code(), Some(2));

    let cfg = write(dir.path(), "bad.toml", "[model]\nkind = \"linear-gaussian\"\n");
    assert_eq!(grid(&cfg, &out, &[]).status.code(), Some(2));

    let cfg = write(dir.path(), "g.toml", SMALL_GRID);
    assert_eq!(grid(&cfg, &out, &["--t", "12"]).status.code(), Some(2));
    assert_eq!(grid(&cfg, &out, &["--estimator", "n3"]).status.code(), Some(2));

    let cfg = write(dir.path(), "imp.toml", IMPOSSIBLE);
    let data = write(dir.path(), "imp.csv", "n,y,x\n0,,\n1,0,\n2,1,\n3,0,\n4,0,\n5,0,\n6,0,\n");
    let o = run(&["sweep-t", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.error.is_some() && r.log_p_hat.is_none()));

    let missing = dir.path().join("absent.csv");
    let o = run(&["sweep-t", "--config", s(&cfg), "--data", s(&missing), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(run(&["validate"]).status.code(), Some(0));
}

#[test]
fn version_is_reported() {
    let o = run(&["--version"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("tfsmc "));
}
