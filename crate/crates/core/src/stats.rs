//! Small statistical helpers shared by inference and the Monte Carlo runners.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_factorial;

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small arguments.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| ((2 * k - 1) as f64).powi(2) * c)
            .map(f64::exp)
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// KS test of `samples` against a continuous CDF. The p-value uses the
/// asymptotic distribution with Stephens' small-sample correction.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsTest {
    let mut xs: Vec<f64> = samples.iter().copied().filter(|v| !v.is_nan()).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return KsTest { n, statistic: 0.0, p_value: 1.0 };
    }
    let nf = n as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsTest { n, statistic: d, p_value: kolmogorov_survival(lambda) }
}

pub fn ks_test_standard_normal(samples: &[f64]) -> KsTest {
    ks_test(samples, normal_cdf)
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_std_err: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let slope_std_err = if n > 2 { (rss / (nf - 2.0) / sxx).sqrt() } else { f64::NAN };
    Some(LineFit { slope, intercept, r_squared, slope_std_err })
}

/// Standard error of a binomial proportion estimate.
pub fn binomial_std_err(p: f64, trials: usize) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// One-sided Fisher exact test that the first group's success rate exceeds
/// the second's: `P(X >= hits_a)` under the hypergeometric null.
pub fn fisher_exact_greater(hits_a: usize, n_a: usize, hits_b: usize, n_b: usize) -> f64 {
    let total = (n_a + n_b) as u64;
    let hits = (hits_a + hits_b) as u64;
    let draws = n_a as u64;
    let upper = hits.min(draws);
    let denom = ln_choose(total, draws);
    let p: f64 = (hits_a as u64..=upper)
        .filter(|&x| hits - x <= total - draws)
        .map(|x| (ln_choose(hits, x) + ln_choose(total - hits, draws - x) - denom).exp())
        .sum();
    p.min(1.0)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
