use std::f64::consts::PI;

use heavyball::momentum::{DifferenceForm, HyperParams};
use heavyball::relu::*;
use heavyball::rng::{gaussian_matrix, rng_from_seed};
use heavyball::Error;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

fn unit_rows(mut x: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in x.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    x
}

/// `(1/m) x_iᵀx_j #{r : ⟨w_r,x_i⟩ ≥ 0 and ⟨w_r,x_j⟩ ≥ 0}` by explicit loops.
fn naive_gram(w: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n, d) = (w.nrows(), x.nrows(), x.ncols());
    let dot = |a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize| (0..d).map(|k| a[(i, k)] * b[(j, k)]).sum::<f64>();
    DMatrix::from_fn(n, n, |i, j| {
        let mut count = 0usize;
        for r in 0..m {
            if dot(w, r, x, i) >= 0.0 && dot(w, r, x, j) >= 0.0 {
                count += 1;
            }
        }
        dot(x, i, x, j) * count as f64 / m as f64
    })
}

#[test]
fn init_is_deterministic_and_centered() {
    assert_eq!(init_relu(16, 3, 9).unwrap(), init_relu(16, 3, 9).unwrap());
    assert_ne!(init_relu(16, 3, 9).unwrap().w, init_relu(16, 3, 10).unwrap().w);
    let net = init_relu(100_000, 10, 1).unwrap();
    assert!(net.w.mean().abs() <= 5e-3);
    assert!(net.a.iter().all(|&s| s == 1.0 || s == -1.0));
    let small = init_relu(64, 2, 2).unwrap();
    assert!(small.a.iter().any(|&s| s > 0.0) && small.a.iter().any(|&s| s < 0.0));
    assert!(matches!(init_relu(0, 2, 0), Err(Error::Validation(_))));
}

#[test]
fn dataset_invariants() {
    let (data, _) = make_relu_dataset(5, 10, 3).unwrap();
    assert!(data.x.row_iter().all(|r| (r.norm() - 1.0).abs() <= 1e-12));
    assert!(data.y.iter().all(|&v| v == 1.0 || v == -1.0));
    assert_eq!(make_relu_dataset(5, 10, 3).unwrap().0, data);

    let long = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    assert!(matches!(ReluDataset::new(long, DVector::from_element(1, 1.0)), Err(Error::Validation(_))));
    let parallel = DMatrix::from_row_slice(2, 2, &[0.6, 0.0, -0.3, 0.0]);
    assert!(matches!(ReluDataset::new(parallel, DVector::from_element(2, 1.0)), Err(Error::Validation(_))));
}

#[test]
fn forward_hand_cases() {
    let net = init_relu(7, 3, 0).unwrap();
    assert_eq!(forward(&net, &DMatrix::zeros(4, 3)).unwrap(), DVector::zeros(4));

    let e1 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let single = ReluNetwork::new(e1.clone(), DVector::from_element(1, 1.0)).unwrap();
    assert_eq!(forward(&single, &e1).unwrap()[0], 1.0);

    let pair = ReluNetwork::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]), DVector::from_vec(vec![1.0, -1.0]))
        .unwrap();
    assert_eq!(forward(&pair, &e1).unwrap()[0], 0.0);
    assert!(matches!(forward(&pair, &DMatrix::zeros(1, 3)), Err(Error::Validation(_))));
}

#[test]
fn subgradient_hand_cases() {
    let net = init_relu(6, 3, 4).unwrap();
    let x = unit_rows(gaussian_matrix(&mut rng_from_seed(5), 2, 3));
    let fitted = ReluDataset::new(x.clone(), forward(&net, &x).unwrap()).unwrap();
    assert_eq!(subgradient(&net, &fitted).unwrap(), DMatrix::zeros(6, 3));

    // One neuron, one active sample: row = (u − y) a x.
    let w = DMatrix::from_row_slice(1, 2, &[0.5, 0.2]);
    let x = DMatrix::from_row_slice(1, 2, &[0.6, 0.8]);
    let a = -1.0;
    let single = ReluNetwork::new(w, DVector::from_element(1, a)).unwrap();
    let data = ReluDataset::new(x, DVector::from_element(1, 0.3)).unwrap();
    let u = -(0.5 * 0.6 + 0.2 * 0.8);
    let g = subgradient(&single, &data).unwrap();
    let expected = [(u - 0.3) * a * 0.6, (u - 0.3) * a * 0.8];
    assert!((g[(0, 0)] - expected[0]).abs() <= 1e-15 && (g[(0, 1)] - expected[1]).abs() <= 1e-15);
}

#[test]
fn subgradient_matches_central_differences() {
    let (m, n, d) = (8, 3, 4);
    let mut checked = 0;
    for seed in 0..20u64 {
        let net = init_relu(m, d, seed).unwrap();
        let (data, _) = make_relu_dataset(n, d, seed + 100).unwrap();
        let z = &data.x * net.w.transpose();
        if z.iter().any(|v| v.abs() < 1e-3) {
            continue;
        }
        let g = subgradient(&net, &data).unwrap();
        let h = 1e-6;
        for idx in 0..m * d {
            let mut plus = net.w.clone();
            plus[idx] += h;
            let mut minus = net.w.clone();
            minus[idx] -= h;
            let fd = (loss(&net.with_weights(plus), &data).unwrap() - loss(&net.with_weights(minus), &data).unwrap())
                / (2.0 * h);
            assert!((fd - g[idx]).abs() <= 1e-6, "seed {seed} entry {idx}: {fd} vs {}", g[idx]);
        }
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn empirical_gram_matches_naive_loops() {
    for seed in 0..5u64 {
        let net = init_relu(37, 6, seed).unwrap();
        let (data, _) = make_relu_dataset(4, 6, seed + 50).unwrap();
        let g = gram_empirical(&net, &data).unwrap();
        assert_eq!(g.h, naive_gram(&net.w, &data.x));
        assert_eq!(g.kind, GramKind::EmpiricalAtInit);
    }
}

#[test]
fn empirical_gram_hand_cases() {
    let (data, _) = make_relu_dataset(3, 4, 7).unwrap();
    // Every neuron aligned with x_0: all activations on for sample 0.
    let w = DMatrix::from_fn(5, 4, |_, k| data.x[(0, k)]);
    let net = ReluNetwork::new(w, DVector::from_element(5, 1.0)).unwrap();
    let g = gram_empirical(&net, &data).unwrap();
    assert!((g.h[(0, 0)] - data.x.row(0).norm_squared()).abs() <= 1e-15);

    let single = init_relu(1, 4, 8).unwrap();
    let g = gram_empirical(&single, &data).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let dot = data.x.row(i).dot(&data.x.row(j));
            assert!(g.h[(i, j)] == 0.0 || g.h[(i, j)] == dot);
        }
    }
}

#[test]
fn expected_gram_closed_form() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.75f64.sqrt()]);
    let data = ReluDataset::new(x, DVector::from_element(3, 1.0)).unwrap();
    let g = gram_expected(&data).unwrap();
    assert!((g.h[(0, 0)] - 0.5).abs() <= 1e-15);
    assert_eq!(g.h[(0, 1)], 0.0);
    // 60°: ½ (π − π/3) / (2π) = 1/6.
    assert!((g.h[(0, 2)] - 1.0 / 6.0).abs() <= 1e-12);

    // Monte Carlo over w ~ N(0, I₂).
    let mut rng = rng_from_seed(11);
    let samples = 1_000_000;
    let mut hits = 0usize;
    for _ in 0..samples {
        let w0: f64 = StandardNormal.sample(&mut rng);
        let w1: f64 = StandardNormal.sample(&mut rng);
        if w0 >= 0.0 && 0.5 * w0 + 0.75f64.sqrt() * w1 >= 0.0 {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let estimate = 0.5 * p;
    let se = 0.5 * (p * (1.0 - p) / samples as f64).sqrt();
    assert!((estimate - g.h[(0, 2)]).abs() <= 3.0 * se, "{estimate} vs {} (se {se})", g.h[(0, 2)]);
    assert!(((PI - PI / 3.0) / (2.0 * PI) * 0.5 - g.h[(0, 2)]).abs() <= 1e-15);
}

#[test]
fn expected_gram_refuses_zero_input() {
    let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    let data = ReluDataset { x, y: DVector::from_element(2, 1.0) };
    assert!(matches!(gram_expected(&data), Err(Error::Domain(_))));
}

#[test]
fn concentration_improves_with_width() {
    let (data, _) = make_relu_dataset(5, 10, 21).unwrap();
    let means: Vec<f64> = [100, 1_000, 10_000]
        .iter()
        .map(|&m| (0..10u64).map(|s| gram_concentration_error(&data, m, 500 + s).unwrap()).sum::<f64>() / 10.0)
        .collect();
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
}

#[test]
fn schedule_from_gram() {
    let unit = GramMatrix::new(DMatrix::identity(3, 3) * 0.5, GramKind::EmpiricalAtInit).unwrap();
    let s = acc_schedule(&unit).unwrap();
    assert!((s.hp.beta - 0.25).abs() <= 1e-15);
    assert_eq!(s.perturbed_envelope(), (0.75, 8.0));
    assert!((s.hp.eta - 2.0).abs() <= 1e-15);

    let singular = GramMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), GramKind::Expected).unwrap();
    assert!(matches!(acc_schedule(&singular), Err(Error::Validation(_))));

    let net = init_relu(1000, 10, 1000).unwrap();
    let (data, _) = make_relu_dataset(5, 10, 0).unwrap();
    let s = acc_schedule(&gram_empirical(&net, &data).unwrap()).unwrap();
    assert!(s.bounds.valid);
}

#[test]
fn fitted_labels_stay_fitted() {
    let net = init_relu(50, 4, 30).unwrap();
    let (data, _) = make_relu_dataset(3, 4, 31).unwrap();
    let fitted = ReluDataset::new(data.x.clone(), forward(&net, &data.x).unwrap()).unwrap();
    let run = train_relu(&net, &fitted, &HyperParams::new(0.5, 0.5).unwrap(), 30, &DifferenceForm).unwrap();
    assert!(run.steps.iter().all(|s| s.residual_norm == 0.0));
}

#[test]
fn training_bookkeeping() {
    let (m, n, d) = (200, 4, 6);
    let net = init_relu(m, d, 40).unwrap();
    let (data, _) = make_relu_dataset(n, d, 41).unwrap();
    let schedule = acc_schedule(&gram_empirical(&net, &data).unwrap()).unwrap();
    let run = train_relu(&net, &data, &schedule.hp, 120, &DifferenceForm).unwrap();
    assert_eq!(run.steps.len(), 121);

    let u0 = forward(&net, &data.x).unwrap();
    assert!(u0.norm_squared() <= 10.0 * n as f64 * (m as f64).ln() * (n as f64).ln().powi(2));

    // Final flips aggregate to the recorded fraction.
    let last = run.steps.last().unwrap();
    let total: usize = run.final_flips.iter().sum();
    assert!((total as f64 / (m * n) as f64 - last.pattern_changed_fraction).abs() <= 1e-15);

    // φ_t is the remainder of the recursion against H₀.
    let (eta, beta) = (schedule.hp.eta, schedule.hp.beta);
    for t in 0..run.trace.len() - 1 {
        let xi = &run.trace.entries[t].xi;
        let prev = if t == 0 { xi } else { &run.trace.entries[t - 1].xi };
        let predicted = xi - (&run.gram0.h * xi) * eta + (xi - prev) * beta + run.trace.entries[t].phi.as_ref().unwrap();
        assert!((&run.trace.entries[t + 1].xi - predicted).norm() <= 1e-12 * run.trace.entries[0].xi.norm());
    }

    // Without pattern changes the linear recursion in H_t is exact.
    let xi0 = run.trace.entries[0].xi.norm();
    for s in run.steps.iter().filter(|s| s.patterns_stable) {
        assert!(s.pattern_remainder_norm.unwrap() <= 1e-10 * xi0);
    }

    let cert = certify_relu_run(&run, &schedule).unwrap();
    assert!(!cert.preconditions_met);
    assert!(cert.report.ratios[0] <= 1.0);
    assert!(cert.max_pattern_changed_fraction <= 1.0);
    let table = relu_table(&run, &cert.report);
    for col in ["t", "loss", "residual_norm", "envelope", "ratio", "pattern_changed_fraction", "max_neuron_drift", "iota_norm"] {
        assert_eq!(table.column(col).unwrap().len(), run.steps.len());
    }
}
