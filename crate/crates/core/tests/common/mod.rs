//! Oracles shared by the integration tests. Each one is written from first
//! principles and does not call into the library's numerical code.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semipen_core::Dataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// `P_m`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(m, x);
        dp = if d != 0.0 { d } else { dp };
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn legendre_and_derivative(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `∫_0^1 g` using `m` Gauss points on each of `cells` equal subintervals.
pub fn integrate_unit(g: impl Fn(f64) -> f64, cells: usize, m: usize) -> f64 {
    let (x, w) = gauss_legendre(m);
    let h = 1.0 / cells as f64;
    let mut total = 0.0;
    for c in 0..cells {
        let a = c as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            total += wi * 0.5 * h * g(a + 0.5 * h * (xi + 1.0));
        }
    }
    total
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `P_m(u)` from its explicit power-series coefficients.
pub fn legendre_explicit(m: usize, u: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..=m / 2 {
        let c = factorial(2 * m - 2 * k)
            / (2f64.powi(m as i32) * factorial(k) * factorial(m - k) * factorial(m - 2 * k));
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * c * u.powi((m - 2 * k) as i32);
    }
    s
}

/// Cell-major piecewise Legendre basis at `t`, computed independently.
pub fn basis_oracle(k: usize, r: usize, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; k * r];
    let cell = ((t * k as f64).floor() as usize).min(k - 1);
    let u = 2.0 * (k as f64 * t - cell as f64) - 1.0;
    for m in 0..r {
        out[cell * r + m] = (k as f64).sqrt() * ((2 * m + 1) as f64).sqrt() * legendre_explicit(m, u);
    }
    out
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let pivot_row = a[col].clone();
                for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                    *dst -= f * src;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Dense normal-equations least squares of `y` on the columns
/// `[basis(K, r) | X_I]`. Returns `(beta, delta, mean squared residual)`.
pub struct OracleFit {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma_n: f64,
}

pub fn oracle_design(data: &Dataset, covariates: &[usize], k: usize, r: usize) -> Vec<Vec<f64>> {
    (0..data.n())
        .map(|i| {
            let mut row = basis_oracle(k, r, data.t()[i]);
            row.extend(covariates.iter().map(|&j| data.x()[(i, j)]));
            row
        })
        .collect()
}

pub fn oracle_fit(data: &Dataset, covariates: &[usize], k: usize, r: usize) -> Option<OracleFit> {
    let rows = oracle_design(data, covariates, k, r);
    let p = k * r + covariates.len();
    let mut ata = vec![vec![0.0; p]; p];
    let mut aty = vec![0.0; p];
    for (row, &y) in rows.iter().zip(data.y().iter()) {
        for a in 0..p {
            aty[a] += row[a] * y;
            for b in 0..p {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let coef = gauss_solve(ata, aty)?;
    let rss: f64 = rows
        .iter()
        .zip(data.y().iter())
        .map(|(row, &y)| {
            let fit: f64 = row.iter().zip(&coef).map(|(a, c)| a * c).sum();
            (y - fit).powi(2)
        })
        .sum();
    Some(OracleFit {
        delta: coef[..k * r].to_vec(),
        beta: coef[k * r..].to_vec(),
        gamma_n: rss / data.n() as f64,
    })
}

/// Random dataset with `T` stratified over `cells` equal cells (so every
/// cell is populated), Gaussian `X` and a smooth `f`.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, q: usize, cells: usize) -> Dataset {
    let t: Vec<f64> = (0..n)
        .map(|i| ((i % cells) as f64 + rng.random::<f64>()) / cells as f64)
        .collect();
    let x = DMatrix::from_fn(n, q, |_, _| normal(rng));
    let beta: Vec<f64> = (0..q).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = (0..n)
        .map(|i| {
            let lin: f64 = (0..q).map(|j| beta[j] * x[(i, j)]).sum();
            lin + (5.0 * t[i]).sin() + 0.5 * normal(rng)
        })
        .collect();
    Dataset::new(y, x, t).unwrap()
}

/// Box-Muller standard normal.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Admissible cell counts from the grid formula, written out directly.
pub fn grid_oracle(n: usize, b: u32) -> Vec<usize> {
    let ratio = n as f64 / (n as f64).ln();
    let l = ratio.log2();
    let lo = (l / b as f64).floor() as u32;
    let hi = (l / 2.0).floor() as u32;
    (lo..=hi).map(|e| 1usize << e).collect()
}

/// Brute-force penalized argmin over every subset and every grid `K`,
/// with ties broken by criterion, dimension, covariate list, then `K`.
pub fn brute_force_select(data: &Dataset, b: u32, c_mult: bool) -> (Vec<usize>, usize, f64) {
    let n = data.n();
    let q = data.q();
    let r = ((b - 1) / 2) as usize;
    let mut best: Option<(f64, usize, Vec<usize>, usize)> = None;
    for mask in 0u32..(1 << q) {
        let subset: Vec<usize> = (0..q).filter(|j| mask >> j & 1 == 1).collect();
        for &k in &grid_oracle(n, b) {
            let Some(fit) = oracle_fit(data, &subset, k, r) else { continue };
            let nf = n as f64;
            let pen = if c_mult {
                2.0 * (subset.len() as f64 + 1.0) * (r * k) as f64 * nf.ln() / nf
            } else {
                (subset.len() + r * k) as f64 / nf
            };
            let crit = fit.gamma_n + pen;
            let dim = subset.len() + r * k;
            let cand = (crit, dim, subset.clone(), k);
            let better = match &best {
                None => true,
                Some(b) => {
                    crit.total_cmp(&b.0)
                        .then(dim.cmp(&b.1))
                        .then_with(|| subset.cmp(&b.2))
                        .then(k.cmp(&b.3))
                        .is_lt()
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    let (crit, _, subset, k) = best.expect("some candidate is fittable");
    (subset, k, crit)
}
