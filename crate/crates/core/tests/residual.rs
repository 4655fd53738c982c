use heavyball::momentum::{DifferenceForm, HyperParams};
use heavyball::quadratic::{certify_quadratic_run, make_quadratic, point_at_distance, LinearTerm};
use heavyball::residual::*;
use heavyball::schedule::stc_schedule;
use heavyball::spectral::{build_dynamics_matrix, certify_power_bound, SpectrumSummary};
use heavyball::Error;
use nalgebra::{DMatrix, DVector};

fn geometric_trace(rate: f64, len: usize) -> ResidualTrace {
    ResidualTrace::from_residuals((0..len).map(|t| DVector::from_vec(vec![rate.powi(t as i32), 0.0]))).unwrap()
}

#[test]
fn zero_trace_passes_with_zero_ratios() {
    let trace = ResidualTrace::from_residuals((0..10).map(|_| DVector::zeros(3))).unwrap();
    let report = certify_trace(&trace, &EnvelopeParams::stated(Realization::Relu, 0.9, 2.0)).unwrap();
    assert!(report.passed);
    assert_eq!(report.max_ratio, 0.0);
    assert!(report.ratios.iter().all(|&r| r == 0.0));
}

#[test]
fn stacked_norms_use_equal_start() {
    let trace = geometric_trace(0.5, 3);
    assert!((trace.entries[0].stacked_norm - 2f64.sqrt()).abs() <= 1e-15);
    assert!((trace.entries[1].stacked_norm - 1.25f64.sqrt()).abs() <= 1e-15);
    assert!(certify_trace(&ResidualTrace::new(2), &EnvelopeParams::stated(Realization::Relu, 0.5, 1.0)).is_err());
}

#[test]
fn injected_violation_is_located() {
    let mut residuals: Vec<_> = (0..20).map(|t| DVector::from_vec(vec![0.5f64.powi(t), 0.0])).collect();
    residuals[7] *= 100.0;
    let trace = ResidualTrace::from_residuals(residuals).unwrap();
    let report = certify_trace(&trace, &EnvelopeParams::stated(Realization::DeepLinear, 0.6, 2.0)).unwrap();
    assert!(!report.passed);
    assert_eq!(report.first_violation, Some(7));
    assert!(report.max_ratio > 1.0);
}

#[test]
fn noise_floor_skips_tiny_envelopes() {
    let mut residuals: Vec<_> = (0..40).map(|t| DVector::from_vec(vec![0.5f64.powi(t), 0.0])).collect();
    residuals[39][0] = 1e-9;
    let trace = ResidualTrace::from_residuals(residuals).unwrap();
    let env = EnvelopeParams::stated(Realization::Relu, 0.5, 2.0);
    assert_eq!(certify_trace(&trace, &env).unwrap().first_violation, Some(39));
    let floored = certify_trace(&trace, &env.with_noise_floor(1e-9)).unwrap();
    assert!(floored.passed);
    assert!(floored.evaluated < 40);
}

#[test]
fn meta_constants_are_consistent() {
    for kappa in [1.0, 4.0, 100.0, 1e3] {
        let s = stc_schedule(&SpectrumSummary::new(1.0, kappa).unwrap()).unwrap();
        let env = make_envelope(&s.hp, &s.bounds, true, Realization::DeepLinear).unwrap();
        env.check_consistency(s.hp.beta, 1000).unwrap();
        assert_eq!(env.c1, env.c0);
        assert_eq!(env.c3, env.c0);
        assert_eq!(env.multiplier, 2.0 * env.c0);
        assert!(env.rate < 1.0);
        let plain = make_envelope(&s.hp, &s.bounds, false, Realization::Quadratic).unwrap();
        assert_eq!(plain.rate, s.hp.beta.sqrt());
        assert_eq!((plain.c1, plain.c3), (0.0, 0.0));
    }
    let s = stc_schedule(&SpectrumSummary::new(1.0, 4.0).unwrap()).unwrap();
    let mut env = make_envelope(&s.hp, &s.bounds, true, Realization::Relu).unwrap();
    env.c3 = 10.0 * env.c0;
    assert!(matches!(env.check_consistency(s.hp.beta, 100), Err(Error::Validation(_))));
}

#[test]
fn single_perturbation_matches_power_iteration() {
    let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let hp = HyperParams::new(0.3, 0.5).unwrap();
    let a = build_dynamics_matrix(&h, &hp).unwrap();
    let dense = a.to_dense();
    let phi0 = DVector::from_vec(vec![0.7, -0.2]);

    let mut trace = ResidualTrace::from_residuals((0..12).map(|_| DVector::from_element(2, 1.0))).unwrap();
    trace.set_phi(0, phi0.clone()).unwrap();
    for t in 1..12 {
        trace.set_phi(t, DVector::zeros(2)).unwrap();
    }
    let env = EnvelopeParams { c3: 1.0, ..EnvelopeParams::stated(Realization::Relu, 0.9, 1.0) };
    let budget = perturbation_budget_check(&trace, &env, &a).unwrap();
    assert!(!budget.partial);
    let mut v = DVector::zeros(4);
    v.rows_mut(0, 2).copy_from(&phi0);
    for t in 1..12 {
        assert!((budget.lhs[t] - v.norm()).abs() <= 1e-14 * v.norm().max(1.0), "t = {t}");
        v = &dense * v;
    }
}

#[test]
fn missing_perturbation_marks_budget_partial() {
    let h = DMatrix::identity(1, 1);
    let a = build_dynamics_matrix(&h, &HyperParams::new(0.5, 0.25).unwrap()).unwrap();
    let trace = geometric_trace(0.5, 5);
    let two = ResidualTrace::from_residuals((0..5).map(|t| DVector::from_element(1, 0.5f64.powi(t)))).unwrap();
    let env = EnvelopeParams::stated(Realization::Relu, 0.9, 1.0);
    assert!(perturbation_budget_check(&two, &env, &a).unwrap().partial);
    assert!(matches!(perturbation_budget_check(&trace, &env, &a), Err(Error::Validation(_))));
}

#[test]
fn quadratic_run_has_empty_budget_and_obeys_power_bound() {
    let q = make_quadratic(&[1.0, 3.0, 10.0, 50.0], Some(2), LinearTerm::Zero).unwrap();
    let s = stc_schedule(&q.spectrum).unwrap();
    let w0 = point_at_distance(&q.w_star, 1.0, 3);
    let run = certify_quadratic_run(&q, &s.hp, &w0, 300, &DifferenceForm, "accelerated").unwrap();
    let a = build_dynamics_matrix(&q.gamma, &s.hp).unwrap();
    let budget = perturbation_budget_check(&run.trace, &run.envelope, &a).unwrap();
    assert!(budget.lhs.iter().all(|&l| l == 0.0));
    assert!(budget.passed);

    let xi0 = &w0 - &q.w_star;
    let mut v0 = DVector::zeros(2 * xi0.len());
    v0.rows_mut(0, xi0.len()).copy_from(&xi0);
    v0.rows_mut(xi0.len(), xi0.len()).copy_from(&xi0);
    let power = certify_power_bound(&a, &v0, 300).unwrap();
    assert!(power.first_violation_k.is_none());
    assert!(run.report.passed);
    for (t, r) in run.report.ratios.iter().enumerate() {
        assert!((r - power.ratios[t]).abs() <= 1e-9, "t = {t}: {r} vs {}", power.ratios[t]);
    }
}
