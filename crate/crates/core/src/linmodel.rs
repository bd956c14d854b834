//! Least-squares fits of a single candidate model `(I, K)`.
//!
//! A candidate combines the covariate columns `X_I` with the sieve design
//! `Z_K`. The fit is computed from one Householder QR of `[Z_K | X_I]`;
//! with the sieve columns first, the trailing triangular block `R_xx`
//! satisfies `R_xx' R_xx = X_I' (Id - P_K) X_I`, so the partialled Gram and
//! its inverse come out of the same factorization as the coefficients.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sieve::{design_matrix, BasisSpec};

/// Optional column labels carried through from CSV input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnNames {
    pub y: String,
    pub t: String,
    pub x: Vec<String>,
}

/// Observed sample `(Y_i, X_i, T_i)`, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    t: DVector<f64>,
    names: Option<ColumnNames>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, t: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || t.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, x has {}, t has {}",
                x.nrows(),
                t.len()
            )));
        }
        if n <= x.ncols() + 1 {
            return Err(Error::InvalidConfig(format!(
                "need n > q + 1, got n = {n}, q = {}",
                x.ncols()
            )));
        }
        for (i, &ti) in t.iter().enumerate() {
            if !(0.0..=1.0).contains(&ti) {
                return Err(Error::Domain { value: ti, row: Some(i) });
            }
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite response or covariate".into()));
        }
        Ok(Self { y: DVector::from_vec(y), x, t: DVector::from_vec(t), names: None })
    }

    pub fn with_names(mut self, names: ColumnNames) -> Result<Self> {
        if names.x.len() != self.q() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate names for {} columns",
                names.x.len(),
                self.q()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn t(&self) -> &DVector<f64> {
        &self.t
    }

    pub fn names(&self) -> Option<&ColumnNames> {
        self.names.as_ref()
    }

    /// Label of covariate `j`: its CSV name, or `x{j}` (zero-based).
    pub fn covariate_name(&self, j: usize) -> String {
        self.names
            .as_ref()
            .and_then(|n| n.x.get(j).cloned())
            .unwrap_or_else(|| format!("x{j}"))
    }
}

/// Candidate model: covariate subset `I` (zero-based, sorted) and a sieve
/// with `K` cells of `r` polynomials.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelIndex {
    pub covariates: Vec<usize>,
    pub k: usize,
    pub r: usize,
}

impl ModelIndex {
    pub fn new(mut covariates: Vec<usize>, k: usize, r: usize) -> Self {
        covariates.sort_unstable();
        covariates.dedup();
        Self { covariates, k, r }
    }

    pub fn dim(&self) -> usize {
        self.covariates.len() + self.r * self.k
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        BasisSpec::new(self.k, self.r)
    }
}

impl fmt::Display for ModelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(I = {:?}, K = {}, r = {})", self.covariates, self.k, self.r)
    }
}

/// Least-squares solution for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ModelIndex,
    pub n: usize,
    /// Coefficients of `X_I`, in the order of `model.covariates`.
    pub beta: Vec<f64>,
    /// Sieve coefficients, cell-major.
    pub delta: Vec<f64>,
    /// Mean squared residual.
    pub gamma_n: f64,
    /// `X_I' (Id - P_K) X_I`.
    pub partial_gram: DMatrix<f64>,
    /// `(X_I' (Id - P_K) X_I)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
    /// Ratio of extreme singular values of `[Z_K | X_I]`.
    pub condition: f64,
}

impl FitResult {
    /// `β̂' x_I + δ̂' φ(t)` for a full-length covariate vector `x`.
    pub fn predict(&self, x: &[f64], t: f64) -> Result<f64> {
        let spec = self.model.basis()?;
        let phi = spec.eval(t)?;
        let lin = self.linear_part(x)?;
        Ok(lin + dot(&self.delta, &phi))
    }

    /// Estimated nonparametric component `f̂(t) = δ̂' φ(t)`.
    pub fn f_hat(&self, t: f64) -> Result<f64> {
        let phi = self.model.basis()?.eval(t)?;
        Ok(dot(&self.delta, &phi))
    }

    fn linear_part(&self, x: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for (b, &j) in self.beta.iter().zip(&self.model.covariates) {
            let xj = x.get(j).ok_or_else(|| {
                Error::DimensionMismatch(format!("covariate {j} missing from {}-vector", x.len()))
            })?;
            s += b * xj;
        }
        Ok(s)
    }

    /// Coefficient vector of length `q` with zeros outside `I`.
    pub fn beta_full(&self, q: usize) -> Vec<f64> {
        let mut out = vec![0.0; q];
        for (b, &j) in self.beta.iter().zip(&self.model.covariates) {
            out[j] = *b;
        }
        out
    }

    /// Copy with every coefficient set to zero, used when the fit is
    /// truncated to the zero function.
    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        out.beta.iter_mut().for_each(|b| *b = 0.0);
        out.delta.iter_mut().for_each(|d| *d = 0.0);
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stacks `[Z_K | X_I]`.
pub(crate) fn joint_design(data: &Dataset, model: &ModelIndex) -> Result<DMatrix<f64>> {
    let spec = model.basis()?;
    let z = design_matrix(&spec, data.t().as_slice())?;
    let pz = spec.dim();
    let mut d = DMatrix::zeros(data.n(), model.dim());
    d.columns_mut(0, pz).copy_from(&z);
    for (c, &j) in model.covariates.iter().enumerate() {
        d.column_mut(pz + c).copy_from(&data.x().column(j));
    }
    Ok(d)
}

fn validate_model(data: &Dataset, model: &ModelIndex) -> Result<()> {
    if model.covariates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!("covariate set {:?} not sorted", model.covariates)));
    }
    if let Some(&j) = model.covariates.iter().find(|&&j| j >= data.q()) {
        return Err(Error::DimensionMismatch(format!("covariate {j} but q = {}", data.q())));
    }
    if model.dim() >= data.n() {
        return Err(Error::DegenerateDoF { n: data.n(), dim: model.dim() });
    }
    Ok(())
}

/// Least-squares fit of `Y` on `[X_I | Z_K]`.
///
/// Fails with [`Error::RankDeficient`] when the smallest singular value of
/// the joint design is below `n * eps * largest`.
pub fn fit_model(data: &Dataset, model: &ModelIndex) -> Result<FitResult> {
    validate_model(data, model)?;
    let n = data.n();
    let design = joint_design(data, model)?;
    let p = design.ncols();
    let pz = model.r * model.k;

    let qr = design.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio >= n as f64 * f64::EPSILON) {
        return Err(Error::RankDeficient { model: model.to_string(), ratio });
    }

    let mut qty = data.y().clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, p).into_owned();
    let coef = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient { model: model.to_string(), ratio })?;

    let residual = data.y() - &design * &coef;
    let gamma_n = residual.norm_squared() / n as f64;

    let q_i = model.covariates.len();
    let rxx = r.view((pz, pz), (q_i, q_i)).into_owned();
    let partial_gram = rxx.transpose() * &rxx;
    let rxx_inv = rxx
        .solve_upper_triangular(&DMatrix::identity(q_i, q_i))
        .ok_or_else(|| Error::RankDeficient { model: model.to_string(), ratio })?;
    let xtx_inv = &rxx_inv * rxx_inv.transpose();

    Ok(FitResult {
        model: model.clone(),
        n,
        beta: coef.rows(pz, q_i).iter().copied().collect(),
        delta: coef.rows(0, pz).iter().copied().collect(),
        gamma_n,
        partial_gram,
        xtx_inv,
        condition: if ratio > 0.0 { 1.0 / ratio } else { f64::INFINITY },
    })
}

/// Fitted values `X_I β̂ + Z_K δ̂` at the observed points.
pub fn fitted_values(data: &Dataset, fit: &FitResult) -> Result<DVector<f64>> {
    let design = joint_design(data, &fit.model)?;
    let mut coef = fit.delta.clone();
    coef.extend_from_slice(&fit.beta);
    Ok(design * DVector::from_vec(coef))
}

/// Values of `f̂ = Z_K δ̂` at the observed `T_i`.
pub fn sieve_fitted(data: &Dataset, fit: &FitResult) -> Result<DVector<f64>> {
    let z = design_matrix(&fit.model.basis()?, data.t().as_slice())?;
    Ok(z * DVector::from_column_slice(&fit.delta))
}

/// `‖v‖²_n = n^{-1} Σ v_i²`. Zero for an empty slice.
pub fn empirical_norm_sq(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

/// Axis-aligned box in covariate space, the integration domain for the
/// `λ` norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CovariateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch("box bounds differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l)) {
            return Err(Error::InvalidConfig("box must have positive volume".into()));
        }
        Ok(Self { lower, upper })
    }

    /// Bounding box of the observed covariates. Degenerate coordinates are
    /// widened by one unit so the volume stays positive.
    pub fn bounding(data: &Dataset) -> Self {
        let (mut lower, mut upper) = (Vec::new(), Vec::new());
        for col in data.x().column_iter() {
            let lo = col.min();
            let hi = col.max();
            if hi > lo {
                lower.push(lo);
                upper.push(hi);
            } else {
                lower.push(lo - 0.5);
                upper.push(hi + 0.5);
            }
        }
        Self { lower, upper }
    }
}

/// `∫ ŝ² dλ / vol(box)` over `box × [0, 1]`, in closed form.
///
/// With `ŝ = g(x) + h(t)`, the average splits into `E g² + 2 E g E h + E h²`
/// under the uniform law on the box. Coordinates are independent, so
/// `E g²` only needs first and second box moments; orthonormality gives
/// `E h² = Σ δ̂²`, and `E h` uses the cell integrals of the basis.
pub fn lambda_norm_sq(fit: &FitResult, bbox: &CovariateBox) -> Result<f64> {
    let mut mean = Vec::with_capacity(fit.beta.len());
    let mut second = Vec::with_capacity(fit.beta.len());
    for &j in &fit.model.covariates {
        let (a, b) = match (bbox.lower.get(j), bbox.upper.get(j)) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(Error::DimensionMismatch(format!("box lacks coordinate {j}"))),
        };
        mean.push(0.5 * (a + b));
        second.push((a * a + a * b + b * b) / 3.0);
    }
    let mut eg2 = 0.0;
    for i in 0..fit.beta.len() {
        for k in 0..fit.beta.len() {
            let m = if i == k { second[i] } else { mean[i] * mean[k] };
            eg2 += fit.beta[i] * fit.beta[k] * m;
        }
    }
    let eg = dot(&fit.beta, &mean);
    let eh = dot(&fit.delta, &fit.model.basis()?.integrals());
    let eh2: f64 = fit.delta.iter().map(|d| d * d).sum();
    Ok(eg2 + 2.0 * eg * eh + eh2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny() -> Dataset {
        let t: Vec<f64> = vec![0.05, 0.15, 0.3, 0.45, 0.55, 0.7, 0.85, 0.95];
        let x1 = [0.3, -1.2, 0.8, 0.1, -0.4, 1.5, -0.9, 0.6];
        let x2 = [1.0, 0.2, -0.3, 0.7, 0.9, -1.1, 0.4, -0.2];
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { x1[i] } else { x2[i] });
        let y = (0..8).map(|i| 2.0 * x1[i] + (3.0 * t[i]).sin() + 0.1 * (i as f64 - 3.5)).collect();
        Dataset::new(y, x, t).unwrap()
    }

    #[test]
    fn dataset_validation() {
        let x = DMatrix::zeros(3, 1);
        assert!(Dataset::new(vec![1.0; 3], x.clone(), vec![0.1, 0.2, 0.3]).is_ok());
        assert_eq!(
            Dataset::new(vec![1.0; 3], x.clone(), vec![0.1, 1.2, 0.3]).unwrap_err(),
            Error::Domain { value: 1.2, row: Some(1) }
        );
        assert!(Dataset::new(vec![1.0; 2], DMatrix::zeros(2, 1), vec![0.1, 0.2]).is_err());
        assert!(Dataset::new(vec![1.0; 3], x, vec![0.1, 0.2]).is_err());
    }

    #[test]
    fn noiseless_linear_recovered() {
        let n = 40;
        let t: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let x = DMatrix::from_fn(n, 3, |i, j| ((i * (j + 3)) % 7) as f64 - 3.0 + 0.1 * j as f64);
        let beta = [1.5, 0.0, -2.0];
        let y = (0..n).map(|i| beta[0] * x[(i, 0)] + beta[2] * x[(i, 2)]).collect();
        let data = Dataset::new(y, x, t).unwrap();
        let fit = fit_model(&data, &ModelIndex::new(vec![0, 2], 4, 1)).unwrap();
        assert_abs_diff_eq!(fit.beta[0], 1.5, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.beta[1], -2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.gamma_n, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn piecewise_constant_f_in_sieve() {
        let n = 32;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let levels = [1.0, -0.5, 2.0, 0.25];
        let y: Vec<f64> = t.iter().map(|&ti| levels[((ti * 4.0) as usize).min(3)]).collect();
        let x = DMatrix::from_fn(n, 1, |i, _| (i as f64).sin());
        let data = Dataset::new(y.clone(), x, t.clone()).unwrap();
        let fit = fit_model(&data, &ModelIndex::new(vec![], 4, 1)).unwrap();
        assert_abs_diff_eq!(fit.gamma_n, 0.0, epsilon = 1e-8);
        let fhat = sieve_fitted(&data, &fit).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(fhat[i], y[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn predict_reconstructs_gamma() {
        let data = tiny();
        let fit = fit_model(&data, &ModelIndex::new(vec![0], 2, 1)).unwrap();
        let mut rss = 0.0;
        for i in 0..data.n() {
            let xi: Vec<f64> = data.x().row(i).iter().copied().collect();
            let e = data.y()[i] - fit.predict(&xi, data.t()[i]).unwrap();
            rss += e * e;
        }
        assert_abs_diff_eq!(rss / data.n() as f64, fit.gamma_n, epsilon = 1e-10);
    }

    #[test]
    fn predict_locality() {
        let data = tiny();
        let mut fit = fit_model(&data, &ModelIndex::new(vec![1], 2, 1)).unwrap();
        fit.beta = vec![0.7];
        fit.delta = vec![0.2, -0.4];
        let v = fit.predict(&[0.0, 1.0], 0.8).unwrap();
        assert_abs_diff_eq!(v, 0.7 - 0.4 * 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(fit.zeroed().predict(&[3.0, 1.0], 0.2).unwrap(), 0.0);
        assert!(fit.predict(&[0.0, 1.0], 1.5).is_err());
    }

    #[test]
    fn partial_gram_and_inverse_agree() {
        let data = tiny();
        let fit = fit_model(&data, &ModelIndex::new(vec![0, 1], 2, 1)).unwrap();
        let prod = &fit.partial_gram * &fit.xtx_inv;
        assert_abs_diff_eq!(prod, DMatrix::identity(2, 2), epsilon = 1e-10);
    }

    #[test]
    fn rank_deficiency_detected() {
        let n = 20;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        // Covariate constant within every cell of K = 2: collinear with Z.
        let x = DMatrix::from_fn(n, 1, |i, _| if t[i] < 0.5 { 1.0 } else { 3.0 });
        let data = Dataset::new(vec![0.5; n], x, t).unwrap();
        let err = fit_model(&data, &ModelIndex::new(vec![0], 2, 1)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err:?}");
    }

    #[test]
    fn too_many_parameters() {
        let data = tiny();
        assert!(matches!(
            fit_model(&data, &ModelIndex::new(vec![0, 1], 8, 1)),
            Err(Error::DegenerateDoF { .. })
        ));
        assert!(matches!(
            fit_model(&data, &ModelIndex::new(vec![5], 2, 1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn empirical_norm_examples() {
        assert_eq!(empirical_norm_sq(&[0.0; 5]), 0.0);
        assert_eq!(empirical_norm_sq(&[3.0, 4.0]), 12.5);
        assert_eq!(empirical_norm_sq(&[]), 0.0);
    }

    #[test]
    fn lambda_norm_special_cases() {
        let data = tiny();
        let bbox = CovariateBox::bounding(&data);
        let mut fit = fit_model(&data, &ModelIndex::new(vec![], 2, 1)).unwrap();
        fit.delta = vec![1.5, -2.0];
        assert_abs_diff_eq!(lambda_norm_sq(&fit, &bbox).unwrap(), 6.25, epsilon = 1e-12);
        assert_eq!(lambda_norm_sq(&fit.zeroed(), &bbox).unwrap(), 0.0);
    }

    #[test]
    fn box_rejects_zero_volume() {
        assert!(CovariateBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(CovariateBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }
}
