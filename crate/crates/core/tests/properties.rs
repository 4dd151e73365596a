use proptest::prelude::*;
use tfsmc::oracle::{exact_likelihood, exhaustive_likelihood};
use tfsmc::{
    estimate, kalman_filter, run_forward, simulate, smooth_expectation, DiscreteHmm, DiscreteModel, DiscreteXi,
    Estimator, FilterOptions, KalmanFilter, LinearGaussianHmm, LinearGaussianModel, ProposalKind, RngStream,
    TwoFilterConfig, XiChoice,
};

fn discrete(seed: u64, k: usize, horizon: usize) -> DiscreteHmm {
    let mut rng = RngStream::new(seed, 0);
    let model = DiscreteModel::random(&mut rng, k, 3).unwrap();
    let traj = simulate(&model, &mut rng, horizon).unwrap();
    DiscreteHmm::new(model, traj.observations, DiscreteXi::Predictive, ProposalKind::Adapted).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_recursion_equals_enumeration(seed in any::<u64>(), k in 1usize..5, horizon in 1usize..7) {
        let hmm = discrete(seed, k, horizon);
        let a = exact_likelihood(&hmm).unwrap();
        let b = exhaustive_likelihood(&hmm).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn systems_stay_normalized(seed in any::<u64>(), n in 1usize..64, horizon in 2usize..12) {
        let hmm = discrete(seed, 3, horizon);
        let run = run_forward(&hmm, &mut RngStream::new(seed, 1), &FilterOptions::new(n), horizon, true).unwrap();
        let total: f64 = run.systems.iter().map(|s| s.log_nc_factor).sum();
        prop_assert_eq!(run.log_nc, total);
        for s in &run.systems {
            let mass: f64 = s.log_norm_weights.iter().map(|l| l.exp()).sum();
            prop_assert!((mass - 1.0).abs() < 1e-12);
            prop_assert!(s.ess >= 1.0 - 1e-9 && s.ess <= n as f64 + 1e-9);
            prop_assert!(s.ancestors.iter().all(|&a| a < n));
        }
    }

    #[test]
    fn two_filter_report_invariants(seed in any::<u64>(), n in 1usize..40, t in 3usize..6, quadratic in any::<bool>()) {
        let hmm = discrete(seed, 3, 8);
        let estimator = if quadratic { Estimator::OrderN2 } else { Estimator::OrderN };
        let cfg = TwoFilterConfig::new(n, t, estimator);
        let rng = RngStream::new(seed, 2);
        let r = estimate(&hmm, &rng, &cfg).unwrap();
        prop_assert_eq!(r.log_p_hat, r.log_fwd_nc + r.log_bwd_nc + r.log_combine_term);
        prop_assert!(r.log_p_hat.is_finite());
        if !quadratic {
            let one = smooth_expectation(&hmm, &rng, &cfg, |_| 1.0).unwrap();
            prop_assert_eq!(one, 1.0);
        }
    }

    #[test]
    fn kalman_batching_is_bit_identical(seed in any::<u64>(), nu2 in 0.1f64..50.0, tau2 in 0.1f64..50.0, split in 1usize..19) {
        let model = LinearGaussianModel::tracking(nu2, tau2).unwrap();
        let ys = simulate(&model, &mut RngStream::new(seed, 0), 20).unwrap().observations;
        let full = kalman_filter(&model, &ys).unwrap();
        let mut kf = KalmanFilter::new(&model).unwrap();
        kf.extend(&ys[..split]).unwrap();
        kf.extend(&ys[split..]).unwrap();
        let run = kf.finish().unwrap();
        prop_assert_eq!(full.log_marginal_likelihood.to_bits(), run.log_marginal_likelihood.to_bits());
        let sum: f64 = full.per_step_log_likelihoods.iter().sum();
        prop_assert!((sum - full.log_marginal_likelihood).abs() < 1e-10);
        for b in full.filtered.iter().chain(&full.smoothed).chain(&full.predicted) {
            prop_assert!(b.is_valid());
        }
    }

    #[test]
    fn proposal_samples_have_finite_density(seed in any::<u64>(), nu2 in 0.5f64..100.0, tau2 in 0.5f64..100.0) {
        let model = LinearGaussianModel::tracking(nu2, tau2).unwrap();
        let ys = simulate(&model, &mut RngStream::new(seed, 0), 12).unwrap().observations;
        for kind in [ProposalKind::Adapted, ProposalKind::Prior] {
            let hmm = LinearGaussianHmm::new(model.clone(), ys.clone(), XiChoice::KalmanPredictive, kind).unwrap();
            let r = estimate(&hmm, &RngStream::new(seed, 3), &TwoFilterConfig::new(20, 6, Estimator::OrderN)).unwrap();
            prop_assert!(r.log_p_hat.is_finite());
        }
    }
}
