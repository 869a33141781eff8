use nalgebra::DMatrix;
use proptest::prelude::*;
use vrhmc::{
    bures_w2, chain_rng, noise_coefficients, run_chain, Budget, DynamicsParams, Estimator, EstimatorConfig,
    EstimatorKind, GaussianSummary, LogisticPotential, Potential, QuadraticPotential, RunRecord, SamplerConfig,
};

fn gaussian(mean: Vec<f64>, factor: Vec<f64>) -> GaussianSummary {
    let d = mean.len();
    let a = DMatrix::from_vec(d, d, factor);
    // A Aᵀ + εI is symmetric positive definite
    let cov = &a * a.transpose() + DMatrix::identity(d, d) * 1e-3;
    GaussianSummary::new(mean, cov).unwrap()
}

fn gaussian_pair() -> impl Strategy<Value = (GaussianSummary, GaussianSummary)> {
    (1usize..5).prop_flat_map(|d| {
        let one = || {
            (
                prop::collection::vec(-5.0..5.0f64, d),
                prop::collection::vec(-2.0..2.0f64, d * d),
            )
                .prop_map(|(m, f)| gaussian(m, f))
        };
        (one(), one())
    })
}

fn logistic_model() -> impl Strategy<Value = LogisticPotential> {
    (2usize..8, 1usize..4).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), n),
            prop::collection::vec(prop::bool::ANY, n),
        )
            .prop_map(|(features, signs)| {
                let labels = signs.into_iter().map(|s| if s { 1.0 } else { -1.0 }).collect();
                LogisticPotential::new(features, labels, 0.5).unwrap()
            })
    })
}

fn chain(model: &dyn Potential, estimator: EstimatorConfig, steps: u64, seed: u64) -> RunRecord {
    let mut config = SamplerConfig::new(
        estimator,
        DynamicsParams::new(2.0, 1.0 / model.smoothness(), 0.05).unwrap(),
        Budget::Iterations(steps),
    );
    config.burn_in = 0;
    config.diagnostics.positions = true;
    run_chain(&config, model, &mut chain_rng(seed, 0)).unwrap()
}

fn same_chain(a: &RunRecord, b: &RunRecord) -> bool {
    let bits = |r: &RunRecord| {
        r.rows
            .iter()
            .map(|row| (row.iter, row.potential.to_bits()))
            .collect::<Vec<_>>()
    };
    bits(a) == bits(b) && a.positions == b.positions && a.final_state == b.final_state
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_covariance_is_psd(gamma in 1e-3..1e3f64, xi in 1e-4..1e2f64, h in 1e-6..10.0f64) {
        let params = DynamicsParams::new(gamma, xi, h).unwrap();
        let coeffs = noise_coefficients(&params);
        prop_assert!(coeffs.is_psd(), "γ = {gamma}, ξ = {xi}, h = {h}: {coeffs:?}");
    }

    #[test]
    fn bures_w2_is_a_symmetric_nonnegative_distance((a, b) in gaussian_pair()) {
        let ab = bures_w2(&a, &b).unwrap();
        let ba = bures_w2(&b, &a).unwrap();
        prop_assert!(ab >= 0.0 && ab.is_finite());
        prop_assert!((ab - ba).abs() <= 1e-8 * (1.0 + ab), "{ab} vs {ba}");
        // the distance is the root of a cancelling difference, so roundoff enters as √(ε·tr)
        let own = bures_w2(&a, &a).unwrap();
        let trace = a.covariance().trace();
        prop_assert!(own < 1e-5 * trace.sqrt(), "self distance {own}, trace {trace}");
    }

    #[test]
    fn full_batch_estimators_collapse_to_full_gradient(model in logistic_model(), seed in 0u64..1000) {
        let n = model.n_components();
        let reference = chain(&model, EstimatorConfig::new(EstimatorKind::Full, n, 1), 100, seed);
        for kind in EstimatorKind::ALL {
            let run = chain(&model, EstimatorConfig::new(kind, n, 1), 100, seed);
            prop_assert!(same_chain(&run, &reference), "{} differs at N = {n}", kind.label());
        }
    }

    #[test]
    fn deterministic_query_counts_are_exact(
        n in 2usize..60,
        b_frac in 0.0..1.0f64,
        steps in 1u64..300,
        seed in 0u64..1000,
    ) {
        let model = QuadraticPotential::generate(seed, n, 2, 4.0, 1.0).unwrap();
        let b = 1 + (b_frac * (n - 1) as f64) as usize;
        for kind in [EstimatorKind::Full, EstimatorKind::Sg, EstimatorKind::Saga, EstimatorKind::Sarge] {
            let config = EstimatorConfig::with_default_epoch(kind, n, b);
            let record = chain(&model, config, steps, seed);
            let (expected, sd) = Estimator::expected_queries(&config, n, steps);
            prop_assert_eq!(sd, 0.0);
            prop_assert_eq!(record.queries, expected as u64, "{} with N = {}, b = {}", kind.label(), n, b);
        }
    }
}
