mod common;

use common::{assert_unbiased, random_discrete, tracking_hmm, variance};
use tfsmc::oracle::{exact_backward_nc, exact_likelihood};
use tfsmc::{
    backward_init, forward_init, kalman_filter, run_backward, run_forward, DiscreteHmm, DiscreteModel, DiscreteXi,
    FilterOptions, HmmModel, ProposalKind, RngStream, SmcError, StateSpaceModel,
};

fn uninformative(k: usize) -> DiscreteHmm {
    // Every state emits symbol 0 with probability 0.3.
    let mut rng = RngStream::new(1, 0);
    let base = DiscreteModel::random(&mut rng, k, 2).unwrap();
    let model = DiscreteModel::new(base.initial().to_vec(), base.transition().to_vec(), vec![vec![0.3, 0.7]; k]).unwrap();
    DiscreteHmm::new(model, vec![0, 1, 0, 0], DiscreteXi::Predictive, ProposalKind::Prior).unwrap()
}

#[test]
fn bootstrap_weights_reduce_to_observation_density() {
    let hmm = random_discrete(3, 3, 2, 5, DiscreteXi::Uniform);
    let prior = DiscreteHmm::new(hmm.model().clone(), hmm.observations().to_vec(), DiscreteXi::Uniform, ProposalKind::Prior).unwrap();
    let sys = forward_init(&prior, &mut RngStream::new(0, 0), &FilterOptions::new(50), true).unwrap();
    for (x, w) in sys.particles.iter().zip(&sys.log_weights) {
        assert!((w - prior.log_g(prior.observation(1), x, 1)).abs() < 1e-12);
    }
    let bsys = backward_init(&prior, &mut RngStream::new(0, 1), &FilterOptions::new(50), true).unwrap();
    for (x, w) in bsys.particles.iter().zip(&bsys.log_weights) {
        assert!((w - prior.log_g(prior.observation(5), x, 5)).abs() < 1e-12);
    }
}

#[test]
fn constant_observation_density_has_zero_variance() {
    let hmm = uninformative(3);
    let mut rng = RngStream::new(9, 0);
    let f = forward_init(&hmm, &mut rng, &FilterOptions::new(100), true).unwrap();
    assert!((f.log_nc_factor - 0.3f64.ln()).abs() < 1e-12);
    let b = backward_init(&hmm, &mut rng, &FilterOptions::new(100), true).unwrap();
    assert!((b.log_nc_factor - 0.3f64.ln()).abs() < 1e-12);
    let run = run_forward(&hmm, &mut rng, &FilterOptions::new(100), 4, false).unwrap();
    let want = 0.3f64.ln() * 3.0 + 0.7f64.ln();
    assert!((run.log_nc - want).abs() < 1e-12);
    assert!(run.systems.iter().all(|s| (s.ess - 100.0).abs() < 1e-9));
}

#[test]
fn single_particle_estimate_is_path_weight_product() {
    let hmm = tracking_hmm(1.0, 1.0, 12, 5);
    let opts = FilterOptions::new(1);
    let run = run_forward(&hmm, &mut RngStream::new(4, 4), &opts, 12, false).unwrap();
    let path = run.path(12, 0);
    let mut total = hmm.log_g(hmm.observation(1), path[0], 1) + hmm.log_initial(path[0]) - hmm.log_q_fwd(path[0], None, 1);
    for n in 2..=12 {
        let (xp, x) = (path[n - 2], path[n - 1]);
        total += hmm.log_g(hmm.observation(n), x, n) + hmm.log_f(xp, x, n) - hmm.log_q_fwd(x, Some(xp), n);
    }
    assert!((run.log_nc - total).abs() < 1e-9);

    let brun = run_backward(&hmm, &mut RngStream::new(4, 5), &opts, 3, false).unwrap();
    let path = brun.path(3, 0);
    let mut total = 0.0;
    for n in 3..=12 {
        let x = path[n - 3];
        total += hmm.log_xi(x, n) + hmm.log_g(hmm.observation(n), x, n);
        if n < 12 {
            let xn = path[n - 2];
            total += hmm.log_f(x, xn, n + 1) - hmm.log_xi(xn, n + 1) - hmm.log_q_bwd(x, Some(xn), n);
        } else {
            total -= hmm.log_q_bwd(x, None, n);
        }
    }
    assert!((brun.log_nc - total).abs() < 1e-9);
}

#[test]
fn run_lengths_and_final_resampling() {
    let hmm = random_discrete(2, 3, 2, 6, DiscreteXi::Uniform);
    let opts = FilterOptions::new(20);
    let f = run_forward(&hmm, &mut RngStream::new(0, 0), &opts, 4, true).unwrap();
    assert_eq!(f.systems.len(), 4);
    assert!(!f.systems[3].resampled && f.systems[2].resampled);
    assert_eq!(f.log_nc, f.log_nc_through(4));
    let b = run_backward(&hmm, &mut RngStream::new(0, 1), &opts, 2, true).unwrap();
    assert_eq!(b.systems.iter().map(|s| s.time).collect::<Vec<_>>(), vec![6, 5, 4, 3, 2]);
    assert!(!b.systems[4].resampled && b.systems[3].resampled);
    assert_eq!(b.log_nc, b.log_nc_from(2));
    assert!(matches!(
        run_forward(&hmm, &mut RngStream::new(0, 0), &opts, 7, true),
        Err(SmcError::TimeOutOfRange { .. })
    ));
    // A single-step run is the initial system.
    let one = run_forward(&hmm, &mut RngStream::new(8, 0), &opts, 1, false).unwrap();
    let init = forward_init(&hmm, &mut RngStream::new(8, 0), &opts, true).unwrap();
    assert_eq!(one.systems[0].log_weights, init.log_weights);
    let last = run_backward(&hmm, &mut RngStream::new(8, 1), &opts, 6, false).unwrap();
    let binit = backward_init(&hmm, &mut RngStream::new(8, 1), &opts, true).unwrap();
    assert_eq!(last.systems[0].log_weights, binit.log_weights);
}

#[test]
fn backward_paths_follow_parents() {
    let hmm = tracking_hmm(2.0, 1.0, 10, 3);
    let b = run_backward(&hmm, &mut RngStream::new(0, 0), &FilterOptions::new(30), 4, false).unwrap();
    let path = b.path(4, 7);
    assert_eq!(path.len(), 7);
    let mut i = 7;
    for n in 4..=10 {
        assert_eq!(path[n - 4], &b.system(n).particles[i]);
        if n < 10 {
            i = b.system(n).parents[i];
        }
    }
}

#[test]
fn forward_first_factor_is_unbiased() {
    let hmm = random_discrete(11, 3, 3, 1, DiscreteXi::Uniform);
    let exact = exact_likelihood(&hmm).unwrap().ln();
    let prior = DiscreteHmm::new(hmm.model().clone(), hmm.observations().to_vec(), DiscreteXi::Uniform, ProposalKind::Prior).unwrap();
    let logs: Vec<f64> = (0..200)
        .map(|r| forward_init(&prior, &mut RngStream::new(20, r), &FilterOptions::new(2000), true).unwrap().log_nc_factor)
        .collect();
    assert_unbiased("p(y_1)", &logs, exact);
}

#[test]
fn forward_estimate_is_unbiased_on_discrete_model() {
    let hmm = random_discrete(12, 3, 2, 5, DiscreteXi::Uniform);
    let exact = exact_likelihood(&hmm).unwrap().ln();
    for kind in [ProposalKind::Prior, ProposalKind::Adapted] {
        let h = DiscreteHmm::new(hmm.model().clone(), hmm.observations().to_vec(), DiscreteXi::Uniform, kind).unwrap();
        let logs: Vec<f64> = (0..500)
            .map(|r| run_forward(&h, &mut RngStream::new(21, r), &FilterOptions::new(50), 5, true).unwrap().log_nc)
            .collect();
        assert_unbiased("forward discrete", &logs, exact);
    }
}

#[test]
fn forward_estimate_is_unbiased_on_linear_gaussian_model() {
    let hmm = tracking_hmm(1.0, 1.0, 20, 42);
    let exact = kalman_filter(hmm.model(), hmm.observations()).unwrap().log_marginal_likelihood;
    let logs: Vec<f64> = (0..500)
        .map(|r| run_forward(&hmm, &mut RngStream::new(22, r), &FilterOptions::new(200), 20, true).unwrap().log_nc)
        .collect();
    assert_unbiased("forward Kalman", &logs, exact);
}

#[test]
fn backward_estimates_are_unbiased() {
    for (xi, seed) in [(DiscreteXi::Uniform, 31), (DiscreteXi::Predictive, 32)] {
        let hmm = random_discrete(13, 3, 2, 6, xi);
        for (n_stop, particles) in [(6, 500), (4, 50), (1, 50)] {
            let exact = exact_backward_nc(&hmm, n_stop).unwrap().ln();
            let logs: Vec<f64> = (0..500)
                .map(|r| {
                    run_backward(&hmm, &mut RngStream::new(seed, r), &FilterOptions::new(particles), n_stop, true)
                        .unwrap()
                        .log_nc
                })
                .collect();
            assert_unbiased(&format!("backward from {n_stop}"), &logs, exact);
        }
    }
}

#[test]
fn perfectly_adapted_backward_weights_are_flat() {
    // Uniform transitions and uniform xi: sum_x xi g f(x' | x) does not depend on x'.
    let model = DiscreteModel::new(
        vec![0.2, 0.3, 0.5],
        vec![vec![1.0 / 3.0; 3]; 3],
        vec![vec![0.9, 0.1], vec![0.4, 0.6], vec![0.2, 0.8]],
    )
    .unwrap();
    let hmm = DiscreteHmm::new(model, vec![0, 1, 1, 0, 1], DiscreteXi::Uniform, ProposalKind::Adapted).unwrap();
    let run = run_backward(&hmm, &mut RngStream::new(0, 0), &FilterOptions::new(300), 1, true).unwrap();
    for s in &run.systems[1..] {
        assert!((s.ess - 300.0).abs() < 1e-9, "ESS {} at {}", s.ess, s.time);
    }
}

#[test]
fn kalman_predictive_xi_keeps_backward_ess_at_n() {
    let hmm = tracking_hmm(10.0, 10.0, 100, 8);
    let run = run_backward(&hmm, &mut RngStream::new(1, 1), &FilterOptions::new(300), 1, true).unwrap();
    assert!(run.systems.iter().all(|s| s.ess >= 0.99 * 300.0));
    let fwd = run_forward(&hmm, &mut RngStream::new(1, 2), &FilterOptions::new(300), 100, true).unwrap();
    assert!(fwd.systems.iter().map(|s| s.ess).fold(f64::INFINITY, f64::min) < 300.0);
}

#[test]
fn estimate_variance_shrinks_with_particles() {
    let hmm = tracking_hmm(1.0, 1.0, 30, 6);
    let var_at = |n: usize| {
        let logs: Vec<f64> = (0..200)
            .map(|r| run_forward(&hmm, &mut RngStream::new(n as u64, r), &FilterOptions::new(n), 30, true).unwrap().log_nc)
            .collect();
        variance(&logs)
    };
    assert!(var_at(800) < var_at(100));
}

#[test]
fn degenerate_weights_abort() {
    // Symbol 1 is impossible in every state.
    let model = DiscreteModel::new(vec![0.5, 0.5], vec![vec![0.5, 0.5]; 2], vec![vec![1.0, 0.0]; 2]).unwrap();
    let hmm = DiscreteHmm::new(model, vec![0, 1, 0], DiscreteXi::Uniform, ProposalKind::Prior).unwrap();
    let err = run_forward(&hmm, &mut RngStream::new(0, 0), &FilterOptions::new(10), 3, true).unwrap_err();
    assert!(matches!(err, SmcError::Degenerate { time: 2, .. }));
    assert!(err.is_degeneracy());
}

#[test]
fn runs_are_deterministic() {
    let hmm = tracking_hmm(3.0, 2.0, 25, 2);
    let a = run_forward(&hmm, &mut RngStream::new(5, 9), &FilterOptions::new(64), 25, false).unwrap();
    let b = run_forward(&hmm, &mut RngStream::new(5, 9), &FilterOptions::new(64), 25, false).unwrap();
    assert_eq!(a.log_nc.to_bits(), b.log_nc.to_bits());
    assert_eq!(a.systems[24].particles, b.systems[24].particles);
}
