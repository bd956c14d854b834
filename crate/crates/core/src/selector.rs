//! Penalized least-squares selection over a collection of candidate models.
//!
//! Every candidate `(I, K)` is fitted by least squares and scored by
//! `γ_n + pen(I, K)`. The penalties multiply the parametric and sieve
//! dimensions, `2 (|I| + 1) r K ln n / n`, so that adding a spurious
//! covariate costs at least `2 K ln n / n`, enough to dominate the
//! approximation bias of the sieve at the pilot dimension.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{fit_model, lambda_norm_sq, CovariateBox, Dataset, FitResult, ModelIndex};
use crate::sieve::{
    dimension_grid, pilot_dimension_a, pilot_dimension_alpha, PilotDimension, SieveConfig,
    SieveGrid,
};

/// Largest number of covariates the exhaustive subset search accepts.
pub const MAX_COVARIATES: usize = 20;

/// Penalty schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyKind {
    /// `2 (|I| + 1) r K ln n / n` over the whole dimension grid.
    AdaptiveK,
    /// Same form at the pilot dimension `K_{n,α}` for known smoothness `α`.
    KnownAlpha { alpha: f64 },
    /// Same form at `K_{n,a}`, covering every smoothness `α >= 1/2 + a`.
    UnknownAlpha { a: f64 },
    /// `c (|I| + r K) / n`. Additive in the dimensions; kept only to show
    /// that such penalties over-select.
    GenericAdditive { c: f64 },
}

impl PenaltyKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltyKind::KnownAlpha { alpha } if !(alpha > 0.5) => {
                Err(Error::InvalidConfig(format!("alpha = {alpha} must exceed 1/2")))
            }
            PenaltyKind::UnknownAlpha { a } if !(a > 0.0) => {
                Err(Error::InvalidConfig(format!("a = {a} must be positive")))
            }
            PenaltyKind::GenericAdditive { c } if !(c > 0.0) => {
                Err(Error::InvalidConfig(format!("additive constant c = {c} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Default schedule for a search case: the adaptive form when `K` is
    /// searched, the pilot-dimension forms for cases 2 and 3.
    pub fn for_case(config: &SearchConfig) -> Result<Self> {
        Ok(match config.case {
            CaseKind::Case1 | CaseKind::Full => PenaltyKind::AdaptiveK,
            CaseKind::Case2 => PenaltyKind::KnownAlpha {
                alpha: config.alpha.ok_or(Error::MissingParameter("alpha"))?,
            },
            CaseKind::Case3 => {
                PenaltyKind::UnknownAlpha { a: config.a.ok_or(Error::MissingParameter("a"))? }
            }
        })
    }
}

/// Penalty of a model with `size_i` covariates and `k` cells of order `r`.
pub fn penalty(kind: &PenaltyKind, size_i: usize, k: usize, r: usize, n: usize) -> f64 {
    let n = n as f64;
    match *kind {
        PenaltyKind::AdaptiveK
        | PenaltyKind::KnownAlpha { .. }
        | PenaltyKind::UnknownAlpha { .. } => {
            2.0 * (size_i as f64 + 1.0) * (r * k) as f64 * n.ln() / n
        }
        PenaltyKind::GenericAdditive { c } => c * (size_i + r * k) as f64 / n,
    }
}

/// Which collection of candidate models is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// `I_0` known: `{(I_0, K) : K in grid}`.
    Case1,
    /// `α` known: every subset at `K_{n,α}`.
    Case2,
    /// Nothing known: every subset at `K_{n,a}`.
    Case3,
    /// Every subset at every grid dimension.
    Full,
}

/// Search configuration. Parameters a case does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub case: CaseKind,
    pub b: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i0: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

impl SearchConfig {
    pub fn case1(i0: Vec<usize>, b: u32) -> Self {
        Self { case: CaseKind::Case1, b, i0: Some(i0), alpha: None, a: None }
    }

    pub fn case2(alpha: f64, b: u32) -> Self {
        Self { case: CaseKind::Case2, b, i0: None, alpha: Some(alpha), a: None }
    }

    pub fn case3(a: f64, b: u32) -> Self {
        Self { case: CaseKind::Case3, b, i0: None, alpha: None, a: Some(a) }
    }

    pub fn full(b: u32) -> Self {
        Self { case: CaseKind::Full, b, i0: None, alpha: None, a: None }
    }
}

/// The candidates of one search, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub grid: SieveGrid,
    pub r: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot: Option<PilotDimension>,
    pub models: Vec<ModelIndex>,
}

/// All subsets of `{0..q}` ordered by bitmask.
fn subsets(q: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..(1u32 << q)).map(move |mask| (0..q).filter(|j| mask >> j & 1 == 1).collect())
}

/// Enumerates the candidate models of a case.
///
/// Canonical order: subsets by bitmask, then `K` ascending.
pub fn candidate_grid(config: &SearchConfig, n: usize, q: usize) -> Result<CandidateGrid> {
    if q > MAX_COVARIATES {
        return Err(Error::InvalidConfig(format!(
            "q = {q} exceeds the exhaustive-search cap of {MAX_COVARIATES}"
        )));
    }
    let sieve = SieveConfig::new(n, config.b)?;
    let grid = dimension_grid(&sieve)?;
    let r = sieve.r();
    let (pilot, models) = match config.case {
        CaseKind::Case1 => {
            let i0 = config.i0.clone().ok_or(Error::MissingParameter("i0"))?;
            if let Some(&j) = i0.iter().find(|&&j| j >= q) {
                return Err(Error::DimensionMismatch(format!("I_0 contains {j} but q = {q}")));
            }
            let models = grid.dims.iter().map(|&k| ModelIndex::new(i0.clone(), k, r)).collect();
            (None, models)
        }
        CaseKind::Case2 | CaseKind::Case3 => {
            let pilot = if config.case == CaseKind::Case2 {
                pilot_dimension_alpha(n, config.alpha.ok_or(Error::MissingParameter("alpha"))?, &grid)?
            } else {
                pilot_dimension_a(n, config.a.ok_or(Error::MissingParameter("a"))?, &grid)?
            };
            let models = subsets(q).map(|s| ModelIndex::new(s, pilot.k, r)).collect();
            (Some(pilot), models)
        }
        CaseKind::Full => {
            let models = subsets(q)
                .flat_map(|s| grid.dims.iter().map(move |&k| ModelIndex::new(s.clone(), k, r)))
                .collect();
            (None, models)
        }
    };
    Ok(CandidateGrid { grid, r, pilot, models })
}

/// One row of the selection ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub covariates: Vec<usize>,
    pub k: usize,
    pub dim: usize,
    pub gamma_n: Option<f64>,
    pub penalty: f64,
    pub criterion: Option<f64>,
    pub rank_ok: bool,
}

/// Total order used to pick the winner: criterion, then dimension, then
/// covariate set lexicographically, then `K`.
pub fn compare_candidates(a: &LedgerEntry, b: &LedgerEntry) -> Ordering {
    let ca = a.criterion.unwrap_or(f64::INFINITY);
    let cb = b.criterion.unwrap_or(f64::INFINITY);
    ca.total_cmp(&cb)
        .then(a.dim.cmp(&b.dim))
        .then_with(|| a.covariates.cmp(&b.covariates))
        .then(a.k.cmp(&b.k))
}

/// Index of the best rank-ok entry, if any.
pub fn argmin(table: &[LedgerEntry]) -> Option<usize> {
    table
        .iter()
        .enumerate()
        .filter(|(_, e)| e.rank_ok)
        .min_by(|(_, a), (_, b)| compare_candidates(a, b))
        .map(|(i, _)| i)
}

/// `ln` of the squared truncation threshold `(2 exp(ln² n))²`.
pub fn log_truncation_threshold_sq(n: usize) -> f64 {
    let ln_n = (n as f64).ln();
    2.0 * (std::f64::consts::LN_2 + ln_n * ln_n)
}

/// Whether a squared `λ` norm lies inside the truncation event. Compared on
/// the log scale so large `n` cannot overflow.
pub fn within_truncation(norm_sq: f64, n: usize) -> bool {
    norm_sq <= 0.0 || norm_sq.ln() <= log_truncation_threshold_sq(n)
}

/// Outcome of a penalized search.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub case: CaseKind,
    pub penalty_kind: PenaltyKind,
    /// Least-squares fit of the winning candidate, before truncation.
    pub chosen: FitResult,
    pub criterion: f64,
    pub penalty: f64,
    /// `true` when the winner lies inside the truncation event, i.e. the
    /// reported estimator is the fit itself rather than zero.
    pub gamma_event: bool,
    pub lambda_norm_sq: f64,
    pub chosen_index: usize,
    pub table: Vec<LedgerEntry>,
    pub grid: SieveGrid,
    pub pilot: Option<PilotDimension>,
}

impl SelectionResult {
    /// The reported estimator: the chosen fit, or zero outside the
    /// truncation event.
    pub fn estimator(&self) -> FitResult {
        if self.gamma_event {
            self.chosen.clone()
        } else {
            self.chosen.zeroed()
        }
    }

    pub fn predict(&self, x: &[f64], t: f64) -> Result<f64> {
        let v = self.chosen.predict(x, t)?;
        Ok(if self.gamma_event { v } else { 0.0 })
    }

    pub fn selected_covariates(&self) -> &[usize] {
        &self.chosen.model.covariates
    }

    pub fn selected_k(&self) -> usize {
        self.chosen.model.k
    }

    pub fn rank_deficient_count(&self) -> usize {
        self.table.iter().filter(|e| !e.rank_ok).count()
    }
}

/// Fits every candidate of `config` and returns the penalized minimizer.
///
/// Candidate fits run in parallel; the ledger and the reduction follow the
/// canonical candidate order, so the result does not depend on scheduling.
pub fn select(data: &Dataset, config: &SearchConfig, kind: &PenaltyKind) -> Result<SelectionResult> {
    kind.validate()?;
    let candidates = candidate_grid(config, data.n(), data.q())?;
    select_from(data, config.case, kind, candidates)
}

pub(crate) fn select_from(
    data: &Dataset,
    case: CaseKind,
    kind: &PenaltyKind,
    candidates: CandidateGrid,
) -> Result<SelectionResult> {
    let n = data.n();
    let fits: Vec<Result<FitResult>> =
        candidates.models.par_iter().map(|m| fit_model(data, m)).collect();

    let mut table = Vec::with_capacity(fits.len());
    for (model, fit) in candidates.models.iter().zip(&fits) {
        let pen = penalty(kind, model.covariates.len(), model.k, model.r, n);
        let gamma_n = match fit {
            Ok(f) => Some(f.gamma_n),
            Err(Error::RankDeficient { .. } | Error::DegenerateDoF { .. }) => None,
            Err(e) => return Err(e.clone()),
        };
        table.push(LedgerEntry {
            covariates: model.covariates.clone(),
            k: model.k,
            dim: model.dim(),
            gamma_n,
            penalty: pen,
            criterion: gamma_n.map(|g| g + pen),
            rank_ok: gamma_n.is_some(),
        });
    }

    let best = argmin(&table)
        .ok_or(Error::AllCandidatesRankDeficient { candidates: table.len() })?;
    let chosen = fits
        .into_iter()
        .nth(best)
        .expect("ledger and fits have equal length")
        .expect("winner is rank ok");
    let bbox = CovariateBox::bounding(data);
    let norm_sq = lambda_norm_sq(&chosen, &bbox)?;

    Ok(SelectionResult {
        case,
        penalty_kind: *kind,
        criterion: table[best].criterion.expect("winner has a criterion"),
        penalty: table[best].penalty,
        gamma_event: within_truncation(norm_sq, n),
        lambda_norm_sq: norm_sq,
        chosen_index: best,
        chosen,
        table,
        grid: candidates.grid,
        pilot: candidates.pilot,
    })
}

/// Margin of one penalty condition: `holds` iff `margin > 0` (or `>= 0`
/// for the non-strict condition).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub holds: bool,
    pub margin: f64,
}

/// Checks of the two penalty requirements at one `(n, K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyGapReport {
    pub n: usize,
    pub k: usize,
    /// `min_{I ⊋ I_0} pen(I, K) - pen(I_0, K) > B K^{-2α}`; absent when no
    /// bias bound `B` was supplied.
    pub bias_domination: Option<ConditionCheck>,
    /// `pen(I, K) >= (|I| + rK) ln n / n` for every `|I| <= q`.
    pub dimension_floor: ConditionCheck,
}

/// Evaluates both penalty conditions. `bias_bound` is the user's estimate
/// of `h_1 C(α) L`; without it only the dimension floor is checked.
#[allow(clippy::too_many_arguments)]
pub fn penalty_gap_diagnostic(
    kind: &PenaltyKind,
    n: usize,
    r: usize,
    k: usize,
    size_i0: usize,
    q: usize,
    alpha: f64,
    bias_bound: Option<f64>,
) -> PenaltyGapReport {
    let ln_n = (n as f64).ln();
    let floor_margin = (0..=q)
        .map(|s| penalty(kind, s, k, r, n) - (s + r * k) as f64 * ln_n / n as f64)
        .fold(f64::INFINITY, f64::min);
    let bias_domination = bias_bound.map(|bound| {
        // Both schedules are affine in |I|, so the smallest gap over strict
        // supersets is the one-covariate step.
        let gap = penalty(kind, size_i0 + 1, k, r, n) - penalty(kind, size_i0, k, r, n);
        let margin = gap - bound * (k as f64).powf(-2.0 * alpha);
        ConditionCheck { holds: margin > 0.0, margin }
    });
    PenaltyGapReport {
        n,
        k,
        bias_domination,
        dimension_floor: ConditionCheck { holds: floor_margin >= 0.0, margin: floor_margin },
    }
}

/// Bias-domination check at every dimension of the grid for `n`.
pub fn bias_domination_scan(
    kind: &PenaltyKind,
    n: usize,
    b: u32,
    alpha: f64,
    bias_bound: f64,
) -> Result<Vec<PenaltyGapReport>> {
    let sieve = SieveConfig::new(n, b)?;
    let grid = dimension_grid(&sieve)?;
    Ok(grid
        .dims
        .iter()
        .map(|&k| penalty_gap_diagnostic(kind, n, sieve.r(), k, 0, 1, alpha, Some(bias_bound)))
        .collect())
}

/// Smallest `n` (searched over `[n_min, n_max]`) from which the bias
/// domination condition holds at the unclamped pilot dimension `K_{n,α}`
/// for every larger `n` in the scan. `None` if it never settles.
pub fn bias_domination_threshold(
    r: usize,
    alpha: f64,
    bias_bound: f64,
    n_min: usize,
    n_max: usize,
) -> Option<usize> {
    let holds = |n: usize| {
        let k = crate::sieve::nearest_power_of_two((n as f64).powf(1.0 / (2.0 * alpha + 1.0)));
        let kind = PenaltyKind::KnownAlpha { alpha };
        let gap = penalty(&kind, 1, k, r, n) - penalty(&kind, 0, k, r, n);
        gap > bias_bound * (k as f64).powf(-2.0 * alpha)
    };
    let mut threshold = None;
    let mut n = n_min.max(2);
    while n <= n_max {
        match (holds(n), threshold) {
            (true, None) => threshold = Some(n),
            (false, Some(_)) => threshold = None,
            _ => {}
        }
        n += 1 + n / 64;
    }
    threshold
}
