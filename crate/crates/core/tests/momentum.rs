use heavyball::momentum::*;
use heavyball::quadratic::{make_quadratic, LinearTerm, QuadraticProblem};
use heavyball::rng::{gaussian_vector, rng_from_seed};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn random_quadratic(n: usize, seed: u64) -> QuadraticProblem {
    let mut rng = rng_from_seed(seed);
    let eigs: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
    make_quadratic(&eigs, Some(seed), LinearTerm::Seed(seed + 1)).unwrap()
}

fn trajectory(obj: &QuadraticProblem, hp: &HyperParams, w0: &DVector<f64>, t: usize, form: &dyn StepForm) -> Vec<DVector<f64>> {
    run_silent(obj, hp, w0.clone(), t, form).unwrap().into_iter().map(|r| r.w).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn buffer_and_difference_forms_agree(n in 1usize..8, seed in 0u64..10_000, eta_frac in 0.05f64..1.0, beta in 0.0f64..0.99) {
        let obj = random_quadratic(n, seed);
        let hp = HyperParams::new(eta_frac / obj.spectrum.lambda_max, beta).unwrap();
        let w0 = gaussian_vector(&mut rng_from_seed(seed + 2), n);
        let a = trajectory(&obj, &hp, &w0, 50, &BufferForm);
        let b = trajectory(&obj, &hp, &w0, 50, &DifferenceForm);
        let scale = a.iter().map(|w| w.norm()).fold(obj.w_star.norm(), f64::max);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn runs_are_deterministic(n in 1usize..6, seed in 0u64..10_000, beta in 0.0f64..0.99) {
        let obj = random_quadratic(n, seed);
        let hp = HyperParams::new(0.5 / obj.spectrum.lambda_max, beta).unwrap();
        let w0 = gaussian_vector(&mut rng_from_seed(seed + 3), n);
        for form in step_forms() {
            prop_assert_eq!(trajectory(&obj, &hp, &w0, 30, form), trajectory(&obj, &hp, &w0, 30, form));
        }
    }

    #[test]
    fn zero_momentum_matches_gradient_descent(n in 1usize..6, seed in 0u64..10_000, eta_frac in 0.05f64..1.0) {
        let obj = random_quadratic(n, seed);
        let hp = HyperParams::new(eta_frac / obj.spectrum.lambda_max, 0.5).unwrap().without_momentum();
        let mut w = gaussian_vector(&mut rng_from_seed(seed + 4), n);
        let runs: Vec<_> = step_forms().iter().map(|f| trajectory(&obj, &hp, &w, 40, *f)).collect();
        for t in 0..=40 {
            for r in &runs {
                prop_assert_eq!(&r[t], &w);
            }
            w = &w - hp.eta * obj.gradient(&w);
        }
    }

    #[test]
    fn gradient_descent_loss_is_monotone(n in 1usize..6, seed in 0u64..10_000, eta_frac in 0.05f64..1.0) {
        let obj = random_quadratic(n, seed);
        let hp = HyperParams::new(eta_frac / obj.spectrum.lambda_max, 0.0).unwrap();
        let w0 = gaussian_vector(&mut rng_from_seed(seed + 5), n);
        let log = run_silent(&obj, &hp, w0, 60, &DifferenceForm).unwrap();
        for pair in log.windows(2) {
            prop_assert!(pair[1].loss <= pair[0].loss + 1e-12 * pair[0].loss.abs().max(1.0));
        }
    }
}

#[test]
fn zero_horizon_logs_only_the_start() {
    let obj = random_quadratic(3, 1);
    let w0 = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    for form in step_forms() {
        let log = run_silent(&obj, &HyperParams::new(0.1, 0.9).unwrap(), w0.clone(), 0, form).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].w, w0);
        assert_eq!(log[0].loss, obj.value(&w0));
    }
}

#[test]
fn dimension_mismatch_is_refused() {
    let obj = random_quadratic(3, 2);
    let err = run_silent(&obj, &HyperParams::new(0.1, 0.0).unwrap(), DVector::zeros(2), 5, &BufferForm).unwrap_err();
    assert!(matches!(err, heavyball::Error::Validation(_)));
}

#[test]
fn minimizer_is_a_fixed_point() {
    let obj = random_quadratic(4, 3);
    let hp = HyperParams::new(0.5 / obj.spectrum.lambda_max, 0.9).unwrap();
    for form in step_forms() {
        let log = run_silent(&obj, &hp, obj.w_star.clone(), 20, form).unwrap();
        assert!(log.iter().all(|r| (&r.w - &obj.w_star).norm() <= 1e-12 * obj.w_star.norm()));
    }
}
