mod common;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use rand::Rng;
use semipen_core::inference::{
    confidence_intervals, embed_v, full_model_covariance, infer, sigma2_hat, sigma_convergence_diagnostic,
    DimensionRule,
};
use semipen_core::linmodel::{fit_model, Dataset, ModelIndex};
use semipen_core::simlab::dgp::{default_spec, generate, null_f_spec};
use semipen_core::simlab::experiment::replication_seed;

use common::rng;

#[test]
fn sigma2_zero_for_noiseless_exact_model() {
    let n = 200;
    let t: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let mut g = rng(41);
    let x = DMatrix::from_fn(n, 2, |_, _| common::normal(&mut g));
    let y = (0..n).map(|i| 2.0 * x[(i, 1)] + if t[i] < 0.5 { 1.0 } else { -1.0 }).collect();
    let data = Dataset::new(y, x, t).unwrap();
    let fit = fit_model(&data, &ModelIndex::new(vec![1], 4, 1)).unwrap();
    assert_abs_diff_eq!(sigma2_hat(&fit, n).unwrap(), 0.0, epsilon = 1e-10);
}

#[test]
fn sigma2_unbiased_by_monte_carlo() {
    // f ≡ 0 lies in every sieve, so σ̂² is exactly unbiased for σ² = 1.
    let spec = null_f_spec();
    let n = 2000;
    let reps = 500;
    let model = ModelIndex::new(spec.support(), 4, 1);
    let draws: Vec<f64> = (0..reps)
        .map(|rep| {
            let data = generate(&spec, n, replication_seed(41, n, rep)).unwrap();
            sigma2_hat(&fit_model(&data, &model).unwrap(), n).unwrap()
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / reps as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn intervals_collapse_and_stay_symmetric() {
    let data = generate(&default_spec(), 300, 42).unwrap();
    let fit = fit_model(&data, &ModelIndex::new(vec![0, 2], 4, 1)).unwrap();
    for level in [1e-12, 0.3, 0.95, 0.999] {
        for ci in confidence_intervals(&fit, 1.2, level).unwrap() {
            assert_abs_diff_eq!(ci.hi - ci.estimate, ci.estimate - ci.lo, epsilon = 1e-12);
            if level < 1e-9 {
                assert_abs_diff_eq!(ci.hi, ci.estimate, epsilon = 1e-9);
            }
        }
    }
    let rep = infer(&fit, 4, 0.95).unwrap();
    assert_eq!(rep.v_embedded.len(), 4);
    assert_eq!(rep.v_embedded[1], vec![0.0; 4]);
    for (a, ci) in rep.intervals.iter().enumerate() {
        assert_abs_diff_eq!(rep.zstats[a], ci.estimate / ci.std_err, epsilon = 1e-12);
    }
}

#[test]
fn embedding_examples() {
    let v0 = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    let v = embed_v(&v0, &[0, 2], 3).unwrap();
    assert_eq!(v, DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 2.0]));
    let full = DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 4.0]);
    assert_eq!(embed_v(&full, &[0, 1], 2).unwrap(), full);
    assert!(embed_v(&v0, &[0, 3], 3).is_err());
    assert!(embed_v(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), &[0, 1], 2).is_err());
}

#[test]
fn embedding_quadratic_forms() {
    let mut g = rng(43);
    for _ in 0..100 {
        let q = 6;
        let i0 = vec![1, 3, 4];
        let a = DMatrix::from_fn(3, 3, |_, _| common::normal(&mut g));
        let v0 = &a * a.transpose();
        let v = embed_v(&v0, &i0, q).unwrap();
        let c: Vec<f64> = (0..q).map(|_| g.random_range(-5.0..5.0)).collect();
        let cv = nalgebra::DVector::from_vec(c.clone());
        let c0 = nalgebra::DVector::from_fn(3, |i, _| c[i0[i]]);
        let lhs = (cv.transpose() * &v * &cv)[(0, 0)];
        let rhs = (c0.transpose() * &v0 * &c0)[(0, 0)];
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10 * (1.0 + cv.norm_squared()));
    }
}

#[test]
fn full_model_comparison() {
    let spec = default_spec();
    let data = generate(&spec, 1500, 44).unwrap();
    let cmp = full_model_covariance(&data, 8, 1, &[0, 2]).unwrap();
    assert!(cmp.excess_min_eigenvalue >= -1e-8);
    // With I0 = everything there is nothing to marginalize.
    let all = full_model_covariance(&data, 8, 1, &[0, 1, 2, 3]).unwrap();
    for (a, b) in all.full_cov.iter().flatten().zip(all.restricted_cov.iter().flatten()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
    assert!(all.excess.iter().flatten().all(|e| e.abs() < 1e-12));
    assert!(full_model_covariance(&data, 8, 1, &[]).is_err());
}

#[test]
fn partial_gram_converges_to_population() {
    let table = sigma_convergence_diagnostic(
        &default_spec(),
        &[256, 512, 1024, 2048, 4096],
        &[0, 1, 2, 3],
        DimensionRule::Power(0.2),
        1,
        50,
        45,
    )
    .unwrap();
    assert!(table.decreasing);
    assert!(table.spearman < -0.8);
    let empty = sigma_convergence_diagnostic(&default_spec(), &[256, 512], &[], DimensionRule::Fixed(4), 1, 3, 1).unwrap();
    assert!(empty.rows.iter().all(|r| r.median_distance == 0.0));
}
