//! Inference on the linear coefficients of a selected model.
//!
//! The plug-in covariance of `β̂_I` is `σ̂² (X_I'(Id - P_K) X_I)^{-1}`;
//! scaled by `n` it estimates `σ² Σ^{-1}`, where `Σ` is the covariance of
//! the covariates after removing their conditional mean given `T`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{fit_model, Dataset, FitResult, ModelIndex};
use crate::simlab::dgp::{generate, DgpSpec};
use crate::simlab::experiment::replication_seed;
use crate::stats::{median, normal_quantile, spearman};

/// Residual variance `n γ_n / (n - |I| - rK)`.
pub fn sigma2_hat(fit: &FitResult, n: usize) -> Result<f64> {
    let dim = fit.model.dim();
    if n <= dim {
        return Err(Error::DegenerateDoF { n, dim });
    }
    Ok(n as f64 * fit.gamma_n / (n - dim) as f64)
}

/// Plug-in covariance `σ̂² · xtx_inv`.
pub fn beta_covariance(fit: &FitResult, sigma2: f64) -> DMatrix<f64> {
    &fit.xtx_inv * sigma2
}

/// Normal-theory interval for one selected coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    /// Covariate index (zero-based, into the full `X`).
    pub index: usize,
    pub estimate: f64,
    pub std_err: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

/// `β̂_j ± z_{(1+level)/2} · sqrt(cov_jj)` for each selected coefficient.
pub fn confidence_intervals(fit: &FitResult, sigma2: f64, level: f64) -> Result<Vec<Interval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level {level} outside (0, 1)")));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    Ok(fit
        .model
        .covariates
        .iter()
        .enumerate()
        .map(|(c, &j)| {
            let se = (sigma2 * fit.xtx_inv[(c, c)]).max(0.0).sqrt();
            let b = fit.beta[c];
            Interval { index: j, estimate: b, std_err: se, lo: b - z * se, hi: b + z * se, level }
        })
        .collect())
}

/// Places a `|I0| x |I0|` matrix into a `q x q` matrix at rows and columns
/// `I0`, zeros elsewhere.
pub fn embed_v(v0: &DMatrix<f64>, i0: &[usize], q: usize) -> Result<DMatrix<f64>> {
    if v0.nrows() != i0.len() || v0.ncols() != i0.len() {
        return Err(Error::DimensionMismatch(format!(
            "V0 is {}x{} but |I0| = {}",
            v0.nrows(),
            v0.ncols(),
            i0.len()
        )));
    }
    if let Some(&j) = i0.iter().find(|&&j| j >= q) {
        return Err(Error::DimensionMismatch(format!("index {j} outside q = {q}")));
    }
    if i0.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DimensionMismatch("I0 must be strictly increasing".into()));
    }
    let scale = v0.amax().max(1.0);
    if (v0 - v0.transpose()).amax() > 1e-12 * scale {
        return Err(Error::DimensionMismatch("V0 must be symmetric".into()));
    }
    let mut v = DMatrix::zeros(q, q);
    for (a, &i) in i0.iter().enumerate() {
        for (b, &j) in i0.iter().enumerate() {
            v[(i, j)] = v0[(a, b)];
        }
    }
    Ok(v)
}

/// Everything reported about the linear part of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub covariates: Vec<usize>,
    pub sigma2_hat: f64,
    /// `X_I'(Id - P_K) X_I / n`.
    pub sigma_hat: Vec<Vec<f64>>,
    pub beta_cov: Vec<Vec<f64>>,
    /// `n · beta_cov` embedded into `q x q`.
    pub v_embedded: Vec<Vec<f64>>,
    pub intervals: Vec<Interval>,
    /// `β̂_j / se_j`.
    pub zstats: Vec<f64>,
    pub label: String,
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds the inference report for a fit on a dataset with `q` covariates.
pub fn infer(fit: &FitResult, q: usize, level: f64) -> Result<InferenceReport> {
    let n = fit.n;
    let s2 = sigma2_hat(fit, n)?;
    let cov = beta_covariance(fit, s2);
    let intervals = confidence_intervals(fit, s2, level)?;
    let v = embed_v(&(&cov * n as f64), &fit.model.covariates, q)?;
    Ok(InferenceReport {
        covariates: fit.model.covariates.clone(),
        sigma2_hat: s2,
        sigma_hat: rows(&(&fit.partial_gram / n as f64)),
        beta_cov: rows(&cov),
        v_embedded: rows(&v),
        zstats: intervals
            .iter()
            .map(|i| if i.std_err > 0.0 { i.estimate / i.std_err } else { f64::NAN })
            .collect(),
        intervals,
        label: "asymptotic, selection-consistent regime".into(),
    })
}

/// Restricted versus all-covariates covariance of the `I0` coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullModelComparison {
    pub i0: Vec<usize>,
    pub k: usize,
    pub sigma2_hat: f64,
    /// `I_{11.2}^{-1}`: asymptotic covariance of the `I0` block when every
    /// covariate is fitted.
    pub full_cov: Vec<Vec<f64>>,
    /// `σ̂² Σ̂_{I0}^{-1}`: asymptotic covariance when only `I0` is fitted.
    pub restricted_cov: Vec<Vec<f64>>,
    /// `full_cov - restricted_cov`.
    pub excess: Vec<Vec<f64>>,
    pub excess_min_eigenvalue: f64,
}

/// Fits all `q` covariates at cell count `k`, forms the information
/// `Σ̂_q / σ̂²`, and compares the Schur-complement covariance of the `I0`
/// block with the restricted-model covariance.
pub fn full_model_covariance(data: &Dataset, k: usize, r: usize, i0: &[usize]) -> Result<FullModelComparison> {
    let q = data.q();
    let mut i0: Vec<usize> = i0.to_vec();
    i0.sort_unstable();
    i0.dedup();
    if i0.is_empty() || i0.iter().any(|&j| j >= q) {
        return Err(Error::DimensionMismatch(format!("I0 = {i0:?} must be a nonempty subset of 0..{q}")));
    }
    let fit = fit_model(data, &ModelIndex::new((0..q).collect(), k, r))?;
    let n = data.n() as f64;
    let s2 = sigma2_hat(&fit, data.n())?;
    if !(s2 > 0.0) {
        return Err(Error::InvalidConfig("residual variance is zero; information undefined".into()));
    }
    let info = &fit.partial_gram / (n * s2);
    let rest: Vec<usize> = (0..q).filter(|j| !i0.contains(j)).collect();
    let pick = |m: &DMatrix<f64>, a: &[usize], b: &[usize]| {
        DMatrix::from_fn(a.len(), b.len(), |i, j| m[(a[i], b[j])])
    };
    let i11 = pick(&info, &i0, &i0);
    let schur = if rest.is_empty() {
        i11.clone()
    } else {
        let i12 = pick(&info, &i0, &rest);
        let i22 = pick(&info, &rest, &rest);
        let i22_inv = i22
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient { model: "I22 block".into(), ratio: 0.0 })?;
        &i11 - &i12 * i22_inv * i12.transpose()
    };
    let full_cov = schur
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient { model: "I11.2 block".into(), ratio: 0.0 })?;
    // σ̂² Σ̂_{I0}^{-1} is the inverse of the unreduced information block.
    let restricted_cov = i11
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient { model: "I11 block".into(), ratio: 0.0 })?;
    let excess = &full_cov - &restricted_cov;
    let sym = (&excess + excess.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    Ok(FullModelComparison {
        i0,
        k,
        sigma2_hat: s2,
        full_cov: rows(&full_cov),
        restricted_cov: rows(&restricted_cov),
        excess: rows(&excess),
        excess_min_eigenvalue: min_eig,
    })
}

/// Rule for the sieve dimension used at each sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DimensionRule {
    Fixed(usize),
    /// Nearest power of two to `n^exponent`.
    Power(f64),
}

impl DimensionRule {
    pub fn k(&self, n: usize) -> usize {
        match *self {
            DimensionRule::Fixed(k) => k,
            DimensionRule::Power(e) => crate::sieve::nearest_power_of_two((n as f64).powf(e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub k: usize,
    /// Median over replications of `‖Σ̂_n - Σ‖_F`.
    pub median_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub covariates: Vec<usize>,
    pub population: Vec<Vec<f64>>,
    pub rows: Vec<ConvergenceRow>,
    /// Spearman correlation between `n` and the median distance.
    pub spearman: f64,
    /// `true` when the distance trends down with `n`.
    pub decreasing: bool,
}

/// Tracks `‖X_I'(Id - P_K) X_I / n - Σ_I‖_F` as `n` grows, with `Σ` the
/// population noise covariance of the spec.
pub fn sigma_convergence_diagnostic(
    spec: &DgpSpec,
    n_list: &[usize],
    covariates: &[usize],
    rule: DimensionRule,
    r: usize,
    reps: usize,
    seed: u64,
) -> Result<ConvergenceTable> {
    let sigma = spec.noise_covariance()?;
    let mut cov = covariates.to_vec();
    cov.sort_unstable();
    cov.dedup();
    let pop = DMatrix::from_fn(cov.len(), cov.len(), |i, j| sigma[(cov[i], cov[j])]);
    if reps == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    let mut rows_out = Vec::new();
    for &n in n_list {
        let k = rule.k(n);
        let dists: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| -> Result<f64> {
                if cov.is_empty() {
                    return Ok(0.0);
                }
                let data = generate(spec, n, replication_seed(seed, n, rep))?;
                let fit = fit_model(&data, &ModelIndex::new(cov.clone(), k, r))?;
                Ok((&fit.partial_gram / n as f64 - &pop).norm())
            })
            .collect::<Result<_>>()?;
        rows_out.push(ConvergenceRow { n, k, median_distance: median(&dists) });
    }
    let ns: Vec<f64> = rows_out.iter().map(|r| r.n as f64).collect();
    let ds: Vec<f64> = rows_out.iter().map(|r| r.median_distance).collect();
    let rho = if cov.is_empty() { 0.0 } else { spearman(&ns, &ds) };
    Ok(ConvergenceTable {
        covariates: cov.clone(),
        population: rows(&pop),
        rows: rows_out,
        spearman: rho,
        decreasing: cov.is_empty() || rho < 0.0,
    })
}
