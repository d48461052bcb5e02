use nalgebra::DMatrix;
use proptest::prelude::*;

use sdspred::metrics::{expected_rate, type_rate, direct_log_mass, EvalConfig};
use sdspred::partition::{discretize, DiscretizeMethod};
use sdspred::predictors::optimal_predictor;
use sdspred::rng;
use sdspred::{DiscreteDist, GridPartition, NoiseModel, SystemModel};

fn dist(raw: Vec<f64>) -> DiscreteDist {
    let total: f64 = raw.iter().sum();
    DiscreteDist::new(raw.into_iter().map(|v| v / total).collect()).unwrap()
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kl_is_nonnegative((p, q) in (2usize..12).prop_flat_map(|n| (weights(n), weights(n)))) {
        let (p, q) = (dist(p), dist(q));
        prop_assert!(p.kl_divergence(&q).unwrap() >= 0.0);
        prop_assert_eq!(p.kl_divergence(&p).unwrap(), 0.0);
    }

    #[test]
    fn kl_zero_only_for_equal_laws((p, q) in (2usize..12).prop_flat_map(|n| (weights(n), weights(n)))) {
        let (p, q) = (dist(p), dist(q));
        let kl = p.kl_divergence(&q).unwrap();
        if p.total_variation(&q).unwrap() > 1e-6 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn shannon_entropy_at_most_log_support(p in (1usize..40).prop_flat_map(weights)) {
        let p = dist(p);
        prop_assert!(p.shannon_entropy() <= (p.len() as f64).ln() + 1e-12);
        prop_assert!(p.shannon_entropy() >= -1e-15);
    }

    #[test]
    fn box_probability_is_monotone_in_eps(
        center in prop::collection::vec(-3.0f64..3.0, 2),
        e1 in 0.01f64..1.0,
        grow in 1.0f64..3.0,
        rho in -0.8f64..0.8,
    ) {
        let diag = NoiseModel::standard_gaussian(2, 1.0).unwrap();
        let corr = NoiseModel::gaussian(vec![0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap();
        let uni = NoiseModel::uniform_box(vec![0.0, 0.0], vec![1.5, 2.0]).unwrap();
        let e2 = e1 * grow;
        for m in [&diag, &uni] {
            let mut r = rng::stream(0);
            let a = m.box_probability(&center, e1, 0, &mut r).unwrap().probability;
            let b = m.box_probability(&center, e2, 0, &mut r).unwrap().probability;
            prop_assert!(a <= b + 1e-15);
        }
        // Monte Carlo estimates: allow for their stated error
        let mut r = rng::stream(1);
        let a = corr.box_probability(&center, e1, 20_000, &mut r).unwrap();
        let b = corr.box_probability(&center, e2, 20_000, &mut r).unwrap();
        prop_assert!(a.probability <= b.probability + 4.0 * (a.std_error + b.std_error) + 1e-15);
    }

    #[test]
    fn simulation_is_bitwise_reproducible(seed in any::<u64>(), horizon in 1usize..60) {
        let sys = SystemModel::linear(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]),
            NoiseModel::standard_gaussian(2, 1.0).unwrap(),
        ).unwrap();
        let a = sys.simulate(&[1.0, -1.0], horizon, seed).unwrap();
        let b = sys.simulate(&[1.0, -1.0], horizon, seed).unwrap();
        prop_assert_eq!(a.states, b.states);
        prop_assert_eq!(a.noises, b.noises);
    }

    #[test]
    fn type_rate_matches_direct_sum(seed in any::<u64>(), k in 1usize..200) {
        let noise = NoiseModel::standard_gaussian(1, 1.0).unwrap();
        let sys = SystemModel::linear(DMatrix::identity(1, 1) * 0.7, noise.clone()).unwrap();
        let grid = GridPartition::for_model(&noise, 0.1).unwrap();
        let q = discretize(&noise, &grid, DiscretizeMethod::Analytic).unwrap();
        let t = sys.simulate(&[0.0], k, seed).unwrap();
        let a = type_rate(&t.noises, &grid, &q).unwrap().value;
        let b = direct_log_mass(&t.noises, &grid, &q).unwrap();
        prop_assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn expected_rate_is_worker_invariant() {
    let sys = SystemModel::linear(
        DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]),
        NoiseModel::gaussian(vec![0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.8])).unwrap(),
    )
    .unwrap();
    let p = optimal_predictor(&sys);
    let cfg = EvalConfig::new(0.1, 50, 24, 9).with_budget(2_000);
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| expected_rate(&sys, &p, &cfg).unwrap())
    };
    let one = run(1);
    for n in [2, 5] {
        let other = run(n);
        assert!((one.mean_rate - other.mean_rate).abs() <= 1e-12);
        assert_eq!(one.per_trajectory_rates, other.per_trajectory_rates);
    }
}
