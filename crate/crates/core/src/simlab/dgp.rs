//! Data-generating processes for the partially linear model.
//!
//! A spec draws `T` from a bounded density on `[0, 1]`, sets
//! `X_j = θ_j(T) + ε_j` with bounded, possibly correlated noise `ε`, and
//! returns `Y = β'X + f(T) + W`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::Dataset;

/// Scalar function of the index `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    Zero,
    Constant { value: f64 },
    /// `slope * t + intercept`.
    Linear { slope: f64, intercept: f64 },
    /// `amplitude * sin(2π frequency t + phase)`.
    Sine { amplitude: f64, frequency: f64, phase: f64 },
    /// Symmetric triangle wave in `[-amplitude, amplitude]` with the given
    /// number of periods on `[0, 1]`.
    Triangle { amplitude: f64, frequency: f64 },
    /// `amplitude * |t - center|^exponent`.
    Power { amplitude: f64, center: f64, exponent: f64 },
    /// Constant `values[c]` on the `c`-th of `values.len()` equal cells.
    Steps { values: Vec<f64> },
    /// Pointwise sum of the terms.
    Sum { terms: Vec<Curve> },
}

impl Curve {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Curve::Zero => 0.0,
            Curve::Constant { value } => *value,
            Curve::Linear { slope, intercept } => slope * t + intercept,
            Curve::Sine { amplitude, frequency, phase } => {
                amplitude * (2.0 * PI * frequency * t + phase).sin()
            }
            Curve::Triangle { amplitude, frequency } => {
                let u = (t * frequency).fract();
                amplitude * (4.0 * (u - 0.5).abs() - 1.0)
            }
            Curve::Power { amplitude, center, exponent } => {
                amplitude * (t - center).abs().powf(*exponent)
            }
            Curve::Steps { values } => {
                let k = values.len();
                values[((t * k as f64).floor() as usize).min(k - 1)]
            }
            Curve::Sum { terms } => terms.iter().map(|c| c.eval(t)).sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Curve::Steps { values } if values.is_empty() => {
                Err(Error::InvalidSpec("step curve needs at least one value".into()))
            }
            Curve::Power { exponent, .. } if !(*exponent > 0.0) => {
                Err(Error::InvalidSpec("power curve exponent must be positive".into()))
            }
            Curve::Sum { terms } => terms.iter().try_for_each(Curve::validate),
            _ => Ok(()),
        }
    }
}

/// Declared smoothness of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Smoothness {
    /// The curve lies in every sieve space used (zero or cell-aligned steps).
    Exact,
    /// Infinitely differentiable.
    Analytic,
    /// Generalized Lipschitz order.
    Order(f64),
}

impl Smoothness {
    /// Whether the declared smoothness strictly exceeds `level`.
    pub fn exceeds(&self, level: f64) -> bool {
        match self {
            Smoothness::Exact | Smoothness::Analytic => true,
            Smoothness::Order(v) => *v > level,
        }
    }

    pub fn order(&self) -> Option<f64> {
        match self {
            Smoothness::Order(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothCurve {
    pub curve: Curve,
    pub smoothness: Smoothness,
}

impl SmoothCurve {
    pub fn new(curve: Curve, smoothness: Smoothness) -> Self {
        Self { curve, smoothness }
    }
}

/// Law of the index `T` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TLaw {
    Uniform,
    /// Density `1 + slope (t - 1/2)`, `|slope| < 2`.
    Linear { slope: f64 },
}

impl TLaw {
    /// Density bounds `(h0, h1)`.
    pub fn density_bounds(&self) -> (f64, f64) {
        match *self {
            TLaw::Uniform => (1.0, 1.0),
            TLaw::Linear { slope } => (1.0 - slope.abs() / 2.0, 1.0 + slope.abs() / 2.0),
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        match *self {
            TLaw::Uniform => 1.0,
            TLaw::Linear { slope } => 1.0 + slope * (t - 0.5),
        }
    }

    fn sample(&self, u: f64) -> f64 {
        match *self {
            TLaw::Uniform => u,
            TLaw::Linear { slope } if slope.abs() < 1e-12 => u,
            TLaw::Linear { slope } => {
                // Invert F(t) = t + slope (t² - t) / 2.
                let a = slope / 2.0;
                let b = 1.0 - a;
                let disc = (b * b + 4.0 * a * u).max(0.0);
                ((-b + disc.sqrt()) / (2.0 * a)).clamp(0.0, 1.0)
            }
        }
    }
}

/// Dependence between the covariate noise coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Correlation {
    Independent,
    Equicorrelated { rho: f64 },
    /// Full correlation matrix, row-major.
    Matrix { rows: Vec<Vec<f64>> },
}

/// Bounded covariate noise `ε = L u` with `u_k` i.i.d. uniform on
/// `[-half_width, half_width]` and `L L'` the correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XNoise {
    pub half_width: f64,
    pub correlation: Correlation,
}

/// Regression error `W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WNoise {
    Gaussian { sigma: f64 },
    Uniform { half_width: f64 },
}

impl WNoise {
    pub fn variance(&self) -> f64 {
        match *self {
            WNoise::Gaussian { sigma } => sigma * sigma,
            WNoise::Uniform { half_width } => half_width * half_width / 3.0,
        }
    }
}

/// Complete description of a data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub beta: Vec<f64>,
    /// Conditional means `θ_j(t) = E[X_j | T = t]`.
    pub theta: Vec<SmoothCurve>,
    pub f: SmoothCurve,
    pub t_law: TLaw,
    pub x_noise: XNoise,
    pub w_noise: WNoise,
}

impl DgpSpec {
    pub fn q(&self) -> usize {
        self.beta.len()
    }

    /// Indices of the nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        self.beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
    }

    pub fn correlation_matrix(&self) -> Result<DMatrix<f64>> {
        let q = self.q();
        let c = match &self.x_noise.correlation {
            Correlation::Independent => DMatrix::identity(q, q),
            Correlation::Equicorrelated { rho } => {
                DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 } else { *rho })
            }
            Correlation::Matrix { rows } => {
                if rows.len() != q || rows.iter().any(|r| r.len() != q) {
                    return Err(Error::InvalidSpec(format!("correlation matrix must be {q}x{q}")));
                }
                DMatrix::from_fn(q, q, |i, j| rows[i][j])
            }
        };
        if (&c - c.transpose()).amax() > 1e-12 || c.diagonal().iter().any(|d| (d - 1.0).abs() > 1e-12)
        {
            return Err(Error::InvalidSpec("correlation matrix must be symmetric with unit diagonal".into()));
        }
        Ok(c)
    }

    fn noise_factor(&self) -> Result<DMatrix<f64>> {
        let c = self.correlation_matrix()?;
        c.cholesky()
            .map(|ch| ch.l())
            .ok_or_else(|| Error::InvalidSpec("covariate noise covariance is not positive definite".into()))
    }

    /// Population `Σ = E Cov(X | T)`, the noise covariance
    /// `half_width² / 3 · C`.
    pub fn noise_covariance(&self) -> Result<DMatrix<f64>> {
        let h = self.x_noise.half_width;
        Ok(self.correlation_matrix()? * (h * h / 3.0))
    }

    /// Almost-sure bound on `|X_j - θ_j(T)|` for each coordinate.
    pub fn noise_bounds(&self) -> Result<Vec<f64>> {
        let l = self.noise_factor()?;
        Ok(l.row_iter().map(|row| self.x_noise.half_width * row.iter().map(|v| v.abs()).sum::<f64>()).collect())
    }

    /// Structural checks plus the smoothness requirement `γ > b/4` on
    /// every `θ_j`.
    pub fn validate(&self, b: u32) -> Result<()> {
        let q = self.q();
        if q == 0 {
            return Err(Error::InvalidSpec("need at least one covariate".into()));
        }
        if self.theta.len() != q {
            return Err(Error::InvalidSpec(format!("{} theta curves for q = {q}", self.theta.len())));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidSpec("beta must be finite".into()));
        }
        for (j, th) in self.theta.iter().enumerate() {
            th.curve.validate()?;
            if !th.smoothness.exceeds(b as f64 / 4.0) {
                return Err(Error::InvalidSpec(format!(
                    "theta_{j} smoothness {:?} must exceed b/4 = {}",
                    th.smoothness,
                    b as f64 / 4.0
                )));
            }
        }
        self.f.curve.validate()?;
        if !(self.x_noise.half_width > 0.0) {
            return Err(Error::InvalidSpec("covariate noise half-width must be positive".into()));
        }
        self.noise_factor()?;
        let (h0, h1) = self.t_law.density_bounds();
        if !(h0 > 0.0 && h1.is_finite()) {
            return Err(Error::InvalidSpec("index density must be bounded away from zero".into()));
        }
        match self.w_noise {
            WNoise::Gaussian { sigma } if !(sigma >= 0.0) => {
                Err(Error::InvalidSpec("sigma must be nonnegative".into()))
            }
            WNoise::Uniform { half_width } if !(half_width >= 0.0) => {
                Err(Error::InvalidSpec("error half-width must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }

    /// Requires `f` to be declared at least `alpha`-smooth.
    pub fn check_alpha(&self, alpha: f64) -> Result<()> {
        match self.f.smoothness {
            Smoothness::Order(v) if v < alpha => Err(Error::InvalidSpec(format!(
                "f is declared {v}-smooth, below the requested alpha = {alpha}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Draws `n` observations. The output depends only on `(spec, n, seed)`.
pub fn generate(spec: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    let l = spec.noise_factor()?;
    let q = spec.q();
    let h = spec.x_noise.half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, q);
    let mut y = Vec::with_capacity(n);
    let mut u = vec![0.0; q];
    for i in 0..n {
        let ti = spec.t_law.sample(rng.random::<f64>());
        for uk in u.iter_mut() {
            *uk = h * (2.0 * rng.random::<f64>() - 1.0);
        }
        let mut yi = spec.f.curve.eval(ti);
        for j in 0..q {
            let eps: f64 = (0..=j).map(|k| l[(j, k)] * u[k]).sum();
            let xij = spec.theta[j].curve.eval(ti) + eps;
            x[(i, j)] = xij;
            yi += spec.beta[j] * xij;
        }
        yi += match spec.w_noise {
            WNoise::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            }
            WNoise::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
        };
        t.push(ti);
        y.push(yi);
    }
    Dataset::new(y, x, t)
}

/// Named catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub description: String,
    /// Which modelling assumptions the entry is built to satisfy.
    pub assumptions: Vec<String>,
    pub spec: DgpSpec,
}

fn sine(amplitude: f64, frequency: f64, phase: f64) -> SmoothCurve {
    SmoothCurve::new(Curve::Sine { amplitude, frequency, phase }, Smoothness::Analytic)
}

fn standard_assumptions() -> Vec<String> {
    vec![
        "T has a density on [0, 1] bounded in [h0, h1]".into(),
        "X - E[X|T] is bounded, so X has compact support".into(),
        "W is independent of (X, T) with finite moments of every order".into(),
        "Var(l'X | T) > 0: the covariate noise covariance is positive definite".into(),
        "theta_j are analytic, hence smoother than b/4".into(),
    ]
}

/// Four covariates, two active (`β = (1.5, 0, -1, 0)`), unit-variance
/// equicorrelated covariate noise, `σ = 1`, smooth `f`.
pub fn default_spec() -> DgpSpec {
    DgpSpec {
        beta: vec![1.5, 0.0, -1.0, 0.0],
        theta: vec![
            sine(0.5, 1.0, PI / 2.0),
            sine(0.5, 1.0, 0.0),
            SmoothCurve::new(Curve::Linear { slope: 1.0, intercept: -0.5 }, Smoothness::Analytic),
            sine(0.3, 2.0, 0.0),
        ],
        f: sine(1.0, 1.0, 0.0),
        t_law: TLaw::Uniform,
        x_noise: XNoise { half_width: 3f64.sqrt(), correlation: Correlation::Equicorrelated { rho: 0.3 } },
        w_noise: WNoise::Gaussian { sigma: 1.0 },
    }
}

/// Two covariates, one active. `f(t) = sin(2πt) + 8 |t - 1/3|^{1/2}`: the
/// square-root cusp has L2 smoothness exactly 1, so the declared `α = 1` is
/// sharp and the rate experiment sees the `α = 1` exponent.
pub fn smooth_f_spec() -> DgpSpec {
    DgpSpec {
        beta: vec![1.0, 0.0],
        theta: vec![sine(0.5, 1.0, 0.0), sine(0.5, 1.0, PI / 2.0)],
        f: SmoothCurve::new(
            Curve::Sum {
                terms: vec![
                    Curve::Sine { amplitude: 1.0, frequency: 1.0, phase: 0.0 },
                    Curve::Power { amplitude: 8.0, center: 1.0 / 3.0, exponent: 0.5 },
                ],
            },
            Smoothness::Order(1.0),
        ),
        t_law: TLaw::Uniform,
        x_noise: XNoise { half_width: 3f64.sqrt(), correlation: Correlation::Independent },
        w_noise: WNoise::Gaussian { sigma: 1.0 },
    }
}

/// Like the default design but with a nondifferentiable cusp
/// `f(t) = 2 |t - 1/2|^0.6`, declared `α = 0.6`.
pub fn rough_f_spec() -> DgpSpec {
    DgpSpec {
        f: SmoothCurve::new(
            Curve::Power { amplitude: 2.0, center: 0.5, exponent: 0.6 },
            Smoothness::Order(0.6),
        ),
        ..default_spec()
    }
}

/// Default design with `f ≡ 0`.
pub fn null_f_spec() -> DgpSpec {
    DgpSpec { f: SmoothCurve::new(Curve::Zero, Smoothness::Exact), ..default_spec() }
}

/// Triangle-wave `f`: Lipschitz, so declared `α = 1` by construction.
pub fn triangle_f_spec() -> DgpSpec {
    DgpSpec {
        f: SmoothCurve::new(Curve::Triangle { amplitude: 1.0, frequency: 2.0 }, Smoothness::Order(1.0)),
        ..default_spec()
    }
}

/// The built-in designs.
pub fn builtin_dgps() -> Vec<CatalogEntry> {
    let mut entries = vec![
        CatalogEntry {
            name: "default".into(),
            description: "q = 4, beta = (1.5, 0, -1, 0), equicorrelated noise (rho = 0.3), sigma = 1, f = sin(2 pi t)".into(),
            assumptions: standard_assumptions(),
            spec: default_spec(),
        },
        CatalogEntry {
            name: "smooth-f".into(),
            description: "q = 2, beta = (1, 0), independent noise, sigma = 1, f = sin(2 pi t) + 8 |t - 1/3|^0.5 (sine plus square-root cusp), declared alpha = 1".into(),
            assumptions: standard_assumptions(),
            spec: smooth_f_spec(),
        },
        CatalogEntry {
            name: "rough-f".into(),
            description: "default design with f = 2 |t - 1/2|^0.6, nondifferentiable at 1/2, declared alpha = 0.6".into(),
            assumptions: standard_assumptions(),
            spec: rough_f_spec(),
        },
        CatalogEntry {
            name: "null-f".into(),
            description: "default design with f = 0 (exact in every sieve)".into(),
            assumptions: standard_assumptions(),
            spec: null_f_spec(),
        },
        CatalogEntry {
            name: "triangle-f".into(),
            description: "default design with a two-period triangle wave f, Lipschitz, declared alpha = 1".into(),
            assumptions: standard_assumptions(),
            spec: triangle_f_spec(),
        },
    ];
    for e in &mut entries {
        e.assumptions.push(match e.spec.f.smoothness {
            Smoothness::Exact => "f lies in every sieve space (smoothness label: exact)".into(),
            Smoothness::Analytic => "f is analytic".into(),
            Smoothness::Order(a) => format!("f declared in Lip*({a}, L2)"),
        });
    }
    entries
}

/// Looks up a catalog entry by name.
pub fn builtin_dgp(name: &str) -> Option<CatalogEntry> {
    builtin_dgps().into_iter().find(|e| e.name == name)
}
