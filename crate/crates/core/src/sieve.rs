//! Dyadic piecewise-polynomial sieve.
//!
//! The sieve space of dimension `r * K` consists of functions on `[0, 1]`
//! that are polynomials of degree at most `r - 1` on each cell of the
//! regular dyadic partition `[(c-1)/K, c/K)`. The basis used here is the
//! cell indicator times a shifted Legendre polynomial, scaled so that the
//! whole family is orthonormal in `L2([0, 1])`.
//!
//! Sample sizes map to a grid of admissible cell counts
//! `{2^A_n, ..., 2^J_n}` with
//! `A_n = floor(log2((n / ln n)^(1/b)))` and `J_n = floor(log2((n / ln n)^(1/2)))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness budget `b`, derived polynomial order `r` and sample size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveConfig {
    b: u32,
    r: usize,
    n: usize,
}

impl SieveConfig {
    pub fn new(n: usize, b: u32) -> Result<Self> {
        if b < 3 {
            return Err(Error::InvalidConfig(format!("smoothness budget b = {b} must be >= 3")));
        }
        if n < 2 {
            return Err(Error::InvalidConfig(format!("sample size n = {n} must be >= 2")));
        }
        Ok(Self { b, r: order_for_budget(b), n })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    /// Polynomials per cell; the per-cell degree is at most `r - 1`.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// `r = floor((b - 1) / 2)`.
pub fn order_for_budget(b: u32) -> usize {
    ((b.saturating_sub(1)) / 2) as usize
}

/// The dyadic grid of admissible cell counts for one sample size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveGrid {
    pub a_n: u32,
    pub j_n: u32,
    pub dims: Vec<usize>,
}

impl SieveGrid {
    /// Smallest admissible cell count `B_n = 2^A_n`.
    pub fn lower(&self) -> usize {
        1 << self.a_n
    }

    /// Largest admissible cell count `N_n = 2^J_n`.
    pub fn upper(&self) -> usize {
        1 << self.j_n
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.dims.contains(&k)
    }
}

/// Builds the grid `{2^A_n, 2^(A_n + 1), ..., 2^J_n}`.
///
/// The logarithm inside is natural, the outer one is base 2.
pub fn dimension_grid(config: &SieveConfig) -> Result<SieveGrid> {
    let n = config.n as f64;
    let ratio = n / n.ln();
    if ratio <= 2f64.powi(config.b as i32) {
        return Err(Error::GridEmpty { n: config.n, b: config.b });
    }
    let log2_ratio = ratio.log2();
    let a_n = (log2_ratio / config.b as f64).floor() as u32;
    let j_n = (log2_ratio / 2.0).floor() as u32;
    if j_n < a_n {
        return Err(Error::GridEmpty { n: config.n, b: config.b });
    }
    let dims = (a_n..=j_n).map(|e| 1usize << e).collect();
    Ok(SieveGrid { a_n, j_n, dims })
}

/// One sieve space: `K` dyadic cells with `r` Legendre polynomials each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisSpec {
    k: usize,
    r: usize,
}

impl BasisSpec {
    pub fn new(k: usize, r: usize) -> Result<Self> {
        if k == 0 || !k.is_power_of_two() {
            return Err(Error::InvalidConfig(format!("cell count K = {k} must be a power of two")));
        }
        if r == 0 {
            return Err(Error::InvalidConfig("polynomial order r must be >= 1".into()));
        }
        Ok(Self { k, r })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Total number of basis functions, `r * K`.
    pub fn dim(&self) -> usize {
        self.r * self.k
    }

    /// Zero-based cell owning `t`; `t = 1` belongs to the last cell.
    pub fn cell_of(&self, t: f64) -> Result<usize> {
        check_unit(t, None)?;
        Ok(self.cell_unchecked(t))
    }

    fn cell_unchecked(&self, t: f64) -> usize {
        ((t * self.k as f64).floor() as usize).min(self.k - 1)
    }

    /// Writes the `r` nonzero basis values of `t`'s cell into `out` and
    /// returns the index of the first of them. Basis functions are laid out
    /// cell-major: index `c * r + m` is degree `m` on cell `c`.
    pub(crate) fn eval_local(&self, t: f64, out: &mut [f64]) -> usize {
        debug_assert_eq!(out.len(), self.r);
        let cell = self.cell_unchecked(t);
        let local = t * self.k as f64 - cell as f64;
        shifted_legendre_normalized(local, out);
        let scale = (self.k as f64).sqrt();
        out.iter_mut().for_each(|v| *v *= scale);
        cell * self.r
    }

    /// Full basis vector at `t` (at most `r` nonzero entries).
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        check_unit(t, None)?;
        let mut local = vec![0.0; self.r];
        let start = self.eval_local(t, &mut local);
        let mut out = vec![0.0; self.dim()];
        out[start..start + self.r].copy_from_slice(&local);
        Ok(out)
    }

    /// `∫_0^1 φ_j(t) dt` for every basis function; only the degree-zero
    /// function of each cell has a nonzero integral, `1 / sqrt(K)`.
    pub fn integrals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let v = 1.0 / (self.k as f64).sqrt();
        for c in 0..self.k {
            out[c * self.r] = v;
        }
        out
    }
}

/// Evaluates `sqrt(2m + 1) * P_m(2x - 1)` for `m = 0..out.len()`.
fn shifted_legendre_normalized(x: f64, out: &mut [f64]) {
    let u = 2.0 * x - 1.0;
    let (mut prev, mut cur) = (0.0, 1.0);
    for (m, slot) in out.iter_mut().enumerate() {
        if m == 1 {
            prev = 1.0;
            cur = u;
        } else if m > 1 {
            let mf = (m - 1) as f64;
            let next = ((2.0 * mf + 1.0) * u * cur - mf * prev) / (mf + 1.0);
            prev = cur;
            cur = next;
        }
        *slot = cur * ((2 * m + 1) as f64).sqrt();
    }
}

fn check_unit(t: f64, row: Option<usize>) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain { value: t, row })
    }
}

/// Evaluates the basis at a single point.
pub fn eval_basis(spec: &BasisSpec, t: f64) -> Result<Vec<f64>> {
    spec.eval(t)
}

/// The `n x rK` matrix whose row `i` is the basis evaluated at `t[i]`.
pub fn design_matrix(spec: &BasisSpec, t: &[f64]) -> Result<DMatrix<f64>> {
    let mut z = DMatrix::zeros(t.len(), spec.dim());
    let mut local = vec![0.0; spec.r];
    for (i, &ti) in t.iter().enumerate() {
        check_unit(ti, Some(i))?;
        let start = spec.eval_local(ti, &mut local);
        for (m, v) in local.iter().enumerate() {
            z[(i, start + m)] = *v;
        }
    }
    Ok(z)
}

/// Pilot cell count chosen from a target `n^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotDimension {
    /// Cell count actually used, inside `[B_n, N_n]`.
    pub k: usize,
    /// Nearest power of two to `target` before clamping.
    pub unclamped: usize,
    pub target: f64,
    pub clamped: bool,
}

/// Nearest power of two on the log scale, ties going down.
pub fn nearest_power_of_two(x: f64) -> usize {
    let e = x.log2();
    let rounded = (e - 0.5).ceil().max(0.0);
    1usize << (rounded as u32)
}

fn pilot(target: f64, grid: &SieveGrid) -> PilotDimension {
    let unclamped = nearest_power_of_two(target);
    let k = unclamped.clamp(grid.lower(), grid.upper());
    PilotDimension { k, unclamped, target, clamped: k != unclamped }
}

/// `K_{n,α}`: nearest power of two to `n^(1/(2α+1))`, clamped into the grid.
pub fn pilot_dimension_alpha(n: usize, alpha: f64, grid: &SieveGrid) -> Result<PilotDimension> {
    if !(alpha > 0.5) {
        return Err(Error::InvalidConfig(format!("smoothness alpha = {alpha} must exceed 1/2")));
    }
    Ok(pilot((n as f64).powf(1.0 / (2.0 * alpha + 1.0)), grid))
}

/// `K_{n,a}`: nearest power of two to `n^(1/(2a+2))`, clamped into the grid.
pub fn pilot_dimension_a(n: usize, a: f64, grid: &SieveGrid) -> Result<PilotDimension> {
    if !(a > 0.0) {
        return Err(Error::InvalidConfig(format!("pilot margin a = {a} must be positive")));
    }
    Ok(pilot((n as f64).powf(1.0 / (2.0 * a + 2.0)), grid))
}

/// Bias-variance balancing dimension `(n / ln n)^(1/(2α+1))`, rounded to a
/// power of two. Used to sanity-check adaptive selections.
pub fn balancing_dimension(n: usize, alpha: f64) -> usize {
    let n = n as f64;
    nearest_power_of_two((n / n.ln()).powf(1.0 / (2.0 * alpha + 1.0)))
}
