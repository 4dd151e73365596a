use std::fmt::Write;
use std::path::PathBuf;

use tfsmc::{simulate, LinearGaussianModel, RngStream};

/// Bit patterns of the seed-42 trajectory, one line per time step:
/// `n x_n[0] x_n[1] y_n` with `y_0` written as `-`.
fn render() -> String {
    let model = LinearGaussianModel::tracking(1.0, 1.0).unwrap();
    let traj = simulate(&model, &mut RngStream::new(42, 0), 50).unwrap();
    let mut out = String::new();
    for (n, x) in traj.states.iter().enumerate() {
        let y = if n == 0 { "-".to_string() } else { format!("{:016x}", traj.observations[n - 1].to_bits()) };
        writeln!(out, "{n} {:016x} {:016x} {y}", x[0].to_bits(), x[1].to_bits()).unwrap();
    }
    out
}

#[test]
fn seed_42_trajectory_is_stable() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_seed42.txt");
    let current = render();
    match std::fs::read_to_string(&path) {
        Ok(golden) => assert_eq!(current, golden, "trajectory drifted from {}", path.display()),
        Err(_) => std::fs::write(&path, current).unwrap(),
    }
    assert_eq!(render(), render());
}
