use approx::assert_abs_diff_eq;
use pggp_core::dataio::{generate_synthetic, Generator};
use pggp_core::prediction::predictive_prob;
use pggp_core::training::fit;
use pggp_core::{GibbsConfig, Predictor, QuadratureRule, SynthSpec, TrainConfig};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn small_model() -> pggp_core::FittedModel {
    let data = generate_synthetic(&SynthSpec {
        generator: Generator::TwoMoons,
        n: 60,
        d: 2,
        noise: 0.2,
        seed: 2,
    })
    .unwrap();
    fit(
        &data,
        &TrainConfig {
            gibbs: GibbsConfig {
                n_chains: 6,
                n_steps: 10,
                seed: 2,
            },
            ..Default::default()
        },
    )
    .unwrap()
}

#[test]
fn close_to_probit_approximation() {
    let rule = QuadratureRule::default();
    let p = predictive_prob(1.0, 1.0, &rule).unwrap();
    let probit = Normal::standard().cdf(1.0 / (8.0 / std::f64::consts::PI + 1.0).sqrt());
    assert_abs_diff_eq!(p, probit, epsilon = 0.02);
}

#[test]
fn chain_average_lies_within_chain_range() {
    let model = small_model();
    let predictor = Predictor::new(&model).unwrap();
    for q in [[0.0, 0.0], [1.0, 0.5], [-0.5, 1.0], [2.0, -0.3]] {
        let per = predictor.per_chain(&q).unwrap();
        let lo = per
            .iter()
            .map(|r| r.probability)
            .fold(f64::INFINITY, f64::min);
        let hi = per
            .iter()
            .map(|r| r.probability)
            .fold(f64::NEG_INFINITY, f64::max);
        let avg = predictor.predict(&q).unwrap();
        assert!(avg.probability >= lo - 1e-15 && avg.probability <= hi + 1e-15);
        assert!(avg.sigma_star > 0.0);
    }
}

#[test]
fn reverts_to_half_far_from_data() {
    let model = small_model();
    let predictor = Predictor::new(&model).unwrap();
    for delta in [50.0, 500.0] {
        let p = predictor.predict(&[0.7 * delta, -0.4 * delta]).unwrap();
        assert_abs_diff_eq!(p.probability, 0.5, epsilon = 0.05);
        assert_abs_diff_eq!(p.sigma_star, 64.0, epsilon = 1e-6);
    }
}

#[test]
fn batch_matches_single_queries() {
    let model = small_model();
    let predictor = Predictor::new(&model).unwrap();
    let qs = vec![vec![0.1, 0.2], vec![1.5, -0.2], vec![-1.0, 0.5]];
    let batch = predictor.predict_batch(&qs).unwrap();
    for (q, b) in qs.iter().zip(&batch) {
        assert_eq!(predictor.predict(q).unwrap(), *b);
    }
}

proptest! {
    #[test]
    fn probability_is_monotone_in_mean(mu in -6.0f64..6.0, gap in 1e-3f64..2.0, var in 1e-6f64..20.0) {
        let rule = QuadratureRule::default();
        let lo = predictive_prob(mu, var, &rule).unwrap();
        let hi = predictive_prob(mu + gap, var, &rule).unwrap();
        prop_assert!(hi >= lo);
        prop_assert!((0.0..=1.0).contains(&lo));
    }

    #[test]
    fn probability_is_antisymmetric(mu in -8.0f64..8.0, var in 1e-6f64..30.0) {
        let rule = QuadratureRule::default();
        let a = predictive_prob(mu, var, &rule).unwrap();
        let b = predictive_prob(-mu, var, &rule).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }
}
