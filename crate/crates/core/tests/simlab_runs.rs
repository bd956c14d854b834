mod common;

use semipen_core::simlab::dgp::{builtin_dgp, builtin_dgps, default_spec, generate, null_f_spec, Correlation, Curve};
use semipen_core::simlab::experiment::{
    classify, replication_seed, run_coverage_experiment, run_rate_experiment, run_selection_experiment,
    SelectionOutcome,
};
use semipen_core::selector::{PenaltyKind, SearchConfig};
use semipen_core::Error;

use common::integrate_unit;

/// Population `Cov(X)` as `Cov(θ(T))` by quadrature plus the noise
/// covariance, against the sample covariance of a large draw.
#[test]
fn sample_covariance_matches_quadrature() {
    let spec = default_spec();
    let n = 100_000;
    let data = generate(&spec, n, 51).unwrap();
    let q = spec.q();
    let noise = spec.noise_covariance().unwrap();
    let mean_theta: Vec<f64> =
        (0..q).map(|j| integrate_unit(|t| spec.theta[j].curve.eval(t), 64, 6)).collect();
    for a in 0..q {
        for b in 0..q {
            let pop = integrate_unit(
                |t| (spec.theta[a].curve.eval(t) - mean_theta[a]) * (spec.theta[b].curve.eval(t) - mean_theta[b]),
                64,
                6,
            ) + noise[(a, b)];
            let xa = data.x().column(a);
            let xb = data.x().column(b);
            let ma = xa.mean();
            let mb = xb.mean();
            let sample = xa.iter().zip(xb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / (n - 1) as f64;
            // Entries are O(1); the sampling SE is about 1/sqrt(n).
            assert!((sample - pop).abs() < 5.0 * 1.5 / (n as f64).sqrt(), "({a},{b}) {sample} vs {pop}");
        }
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let spec = default_spec();
    assert_eq!(generate(&spec, 300, 7).unwrap(), generate(&spec, 300, 7).unwrap());
    assert_ne!(generate(&spec, 300, 7).unwrap(), generate(&spec, 300, 8).unwrap());
    assert_ne!(replication_seed(1, 100, 0), replication_seed(1, 100, 1));
    assert_ne!(replication_seed(1, 100, 0), replication_seed(1, 200, 0));
}

#[test]
fn catalog_lists_named_designs() {
    let names: Vec<String> = builtin_dgps().into_iter().map(|e| e.name).collect();
    for want in ["default", "smooth-f", "rough-f", "null-f"] {
        assert!(names.iter().any(|n| n == want));
    }
    assert_eq!(builtin_dgp("null-f").unwrap().spec.f.curve, Curve::Zero);
    assert!(builtin_dgp("nope").is_none());
    for e in builtin_dgps() {
        e.spec.validate(3).unwrap();
    }
}

#[test]
fn outcomes_classified() {
    assert_eq!(classify(&[0, 2], &[0, 2]), SelectionOutcome::Correct);
    assert_eq!(classify(&[0, 1, 2], &[0, 2]), SelectionOutcome::Overfit);
    assert_eq!(classify(&[0], &[0, 2]), SelectionOutcome::Underfit);
    assert_eq!(classify(&[0, 1], &[0, 2]), SelectionOutcome::Underfit);
}

#[test]
fn selection_frequencies_sum_to_one() {
    let rep = run_selection_experiment(
        &default_spec(),
        &SearchConfig::case3(0.1, 3),
        &PenaltyKind::UnknownAlpha { a: 0.1 },
        &[300, 600],
        30,
        52,
    )
    .unwrap();
    for row in &rep.selection {
        assert_eq!(row.correct + row.overfit + row.underfit + row.failed, 30);
        let s = row.freq_correct + row.freq_overfit + row.freq_underfit + row.freq_failed;
        assert!((s - 1.0).abs() < 1e-12);
    }
    assert_eq!(rep.replications.len(), 60);
}

#[test]
fn coverage_runner_validates_inputs_and_reports_zero_coefficients() {
    let spec = default_spec();
    let cfg = SearchConfig::case1(spec.support(), 3);
    assert!(matches!(
        run_coverage_experiment(&spec, &cfg, &PenaltyKind::AdaptiveK, 500, 50, 0.95, 1),
        Err(Error::InvalidConfig(_))
    ));
    let rep = run_coverage_experiment(&spec, &SearchConfig::case3(0.1, 3), &PenaltyKind::UnknownAlpha { a: 0.1 }, 1000, 100, 0.5, 53)
        .unwrap();
    let cov = rep.coverage.unwrap();
    for row in cov.rows.iter().filter(|r| r.active) {
        let c = row.coverage.unwrap();
        assert!((c - 0.5).abs() < 3.0 * (0.25f64 / row.included as f64).sqrt() + 0.02, "coverage {c}");
    }
    for row in cov.rows.iter().filter(|r| !r.active) {
        assert!(row.excluded_freq > 0.9);
    }
}

#[test]
fn rate_runner_degenerate_when_f_in_sieve_and_noiseless() {
    let mut spec = null_f_spec();
    spec.f.smoothness = semipen_core::simlab::dgp::Smoothness::Order(1.0);
    spec.w_noise = semipen_core::simlab::dgp::WNoise::Gaussian { sigma: 0.0 };
    spec.x_noise.correlation = Correlation::Independent;
    let rep = run_rate_experiment(&spec, 5, &[256, 512, 1024, 2048], 3, 54).unwrap();
    let rate = rep.rate.unwrap();
    assert!(rate.degenerate);
    assert!(rate.fit.is_none());
    assert!(run_rate_experiment(&spec, 5, &[256, 512, 1000, 2048], 3, 54).is_err());
    assert!(run_rate_experiment(&spec, 3, &[256, 512, 1024, 2048], 3, 54).is_err());
}
