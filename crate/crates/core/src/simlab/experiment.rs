//! Replicated Monte Carlo experiments.
//!
//! Replication `i` at sample size `n` draws its data from
//! `seed ^ mix(n, i)`, so any subset of replications can be rerun on its
//! own and the aggregate does not depend on how many worker threads ran.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{confidence_intervals, sigma2_hat};
use crate::linmodel::{empirical_norm_sq, sieve_fitted};
use crate::selector::{select, PenaltyKind, SearchConfig};
use crate::sieve::{balancing_dimension, order_for_budget};
use crate::simlab::dgp::{generate, DgpSpec};
use crate::stats::{binomial_std_err, fit_line, ks_test_standard_normal, median, KsTest, LineFit};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` at sample size `n`.
pub fn replication_seed(seed: u64, n: usize, rep: usize) -> u64 {
    seed ^ splitmix64(splitmix64(n as u64) ^ rep as u64)
}

/// How a selected covariate set relates to the true support `I_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionOutcome {
    Correct,
    /// `I_0 ⊊ Î`.
    Overfit,
    /// `I_0 ⊄ Î`.
    Underfit,
    Failed,
}

pub fn classify(selected: &[usize], truth: &[usize]) -> SelectionOutcome {
    let covers = truth.iter().all(|j| selected.contains(j));
    if !covers {
        SelectionOutcome::Underfit
    } else if selected.len() > truth.len() {
        SelectionOutcome::Overfit
    } else {
        SelectionOutcome::Correct
    }
}

/// Per-replication record, kept out of the JSON payload and available for
/// CSV dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub outcome: SelectionOutcome,
    pub selected: Vec<usize>,
    pub k: usize,
    pub gamma_n: f64,
    pub beta: Vec<f64>,
    pub gamma_event: bool,
    pub error: Option<String>,
}

/// Selection frequencies at one sample size, split as
/// `correct + overfit + underfit + failed = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub n: usize,
    pub reps: usize,
    pub correct: usize,
    pub overfit: usize,
    pub underfit: usize,
    pub failed: usize,
    pub freq_correct: f64,
    pub freq_overfit: f64,
    pub freq_underfit: f64,
    pub freq_failed: f64,
    pub se_correct: f64,
    pub se_overfit: f64,
    pub se_underfit: f64,
    /// Most frequent selected `K` (smallest on ties).
    pub modal_k: Option<usize>,
    /// Replications whose estimator fell outside the truncation event.
    pub truncated: usize,
}

fn selection_row(n: usize, records: &[ReplicationRecord]) -> SelectionRow {
    let reps = records.len();
    let count = |o| records.iter().filter(|r| r.outcome == o).count();
    let correct = count(SelectionOutcome::Correct);
    let overfit = count(SelectionOutcome::Overfit);
    let underfit = count(SelectionOutcome::Underfit);
    let failed = count(SelectionOutcome::Failed);
    let freq = |c: usize| if reps == 0 { 0.0 } else { c as f64 / reps as f64 };
    let mut ks: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records.iter().filter(|r| r.outcome != SelectionOutcome::Failed) {
        *ks.entry(r.k).or_default() += 1;
    }
    let modal_k = ks.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| *k);
    SelectionRow {
        n,
        reps,
        correct,
        overfit,
        underfit,
        failed,
        freq_correct: freq(correct),
        freq_overfit: freq(overfit),
        freq_underfit: freq(underfit),
        freq_failed: freq(failed),
        se_correct: binomial_std_err(freq(correct), reps),
        se_overfit: binomial_std_err(freq(overfit), reps),
        se_underfit: binomial_std_err(freq(underfit), reps),
        modal_k,
        truncated: records.iter().filter(|r| !r.gamma_event && r.error.is_none()).count(),
    }
}

/// Which runner produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Selection,
    Coverage,
    Rate,
}

/// Coverage and normality of one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub index: usize,
    pub beta: f64,
    pub active: bool,
    /// Replications in which the coefficient was selected.
    pub included: usize,
    /// Frequency of `j ∉ Î` (the estimate is exactly zero).
    pub excluded_freq: f64,
    /// Coverage over replications that included `j`.
    pub coverage: Option<f64>,
    pub coverage_se: Option<f64>,
    /// KS test of the standardized errors against N(0, 1), pooled over
    /// replications that included `j`.
    pub ks: Option<KsTest>,
    /// Mean of `sqrt(n) |β̂_j|` for true-zero coefficients when included.
    pub mean_abs_root_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSection {
    pub n: usize,
    pub level: f64,
    pub rows: Vec<CoverageRow>,
    pub mean_sigma2_hat: f64,
    pub sigma2: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub median_error: f64,
    pub modal_k: Option<usize>,
    /// `(n / ln n)^{1/(2α+1)}` rounded to a power of two.
    pub balancing_k: usize,
    pub grid: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSection {
    pub alpha: f64,
    pub b: u32,
    pub expected_slope: f64,
    pub rows: Vec<RateRow>,
    /// Least-squares fit of `ln median_error` on `ln(n / ln n)`; absent
    /// when the errors vanish.
    pub fit: Option<LineFit>,
    /// 95% normal interval for the slope.
    pub slope_ci: Option<(f64, f64)>,
    pub degenerate: bool,
}

/// Result of a Monte Carlo run. Deterministic given its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub reps: usize,
    pub search: SearchConfig,
    pub penalty: PenaltyKind,
    pub truth: Vec<usize>,
    pub selection: Vec<SelectionRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSection>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub replications: Vec<ReplicationRecord>,
}

struct Replica {
    record: ReplicationRecord,
    ci: Option<Vec<(usize, f64, f64, bool)>>,
    sigma2: Option<f64>,
    f_error: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn replicate(
    spec: &DgpSpec,
    search: &SearchConfig,
    kind: &PenaltyKind,
    n: usize,
    rep: usize,
    seed: u64,
    level: Option<f64>,
    track_f: bool,
) -> Replica {
    let truth = spec.support();
    let rseed = replication_seed(seed, n, rep);
    let failed = |e: Error| Replica {
        record: ReplicationRecord {
            n,
            rep,
            seed: rseed,
            outcome: SelectionOutcome::Failed,
            selected: Vec::new(),
            k: 0,
            gamma_n: f64::NAN,
            beta: Vec::new(),
            gamma_event: false,
            error: Some(e.to_string()),
        },
        ci: None,
        sigma2: None,
        f_error: None,
    };
    let data = match generate(spec, n, rseed) {
        Ok(d) => d,
        Err(e) => return failed(e),
    };
    let sel = match select(&data, search, kind) {
        Ok(s) => s,
        Err(e) => return failed(e),
    };
    let est = sel.estimator();
    let mut out = Replica {
        record: ReplicationRecord {
            n,
            rep,
            seed: rseed,
            outcome: classify(sel.selected_covariates(), &truth),
            selected: sel.selected_covariates().to_vec(),
            k: sel.selected_k(),
            gamma_n: sel.chosen.gamma_n,
            beta: est.beta_full(spec.q()),
            gamma_event: sel.gamma_event,
            error: None,
        },
        ci: None,
        sigma2: None,
        f_error: None,
    };
    if let Some(level) = level {
        if let Ok(s2) = sigma2_hat(&est, n) {
            out.sigma2 = Some(s2);
            if let Ok(ints) = confidence_intervals(&est, s2, level) {
                out.ci = Some(
                    ints.iter()
                        .map(|ci| {
                            let truth = spec.beta[ci.index];
                            let z = if ci.std_err > 0.0 { (ci.estimate - truth) / ci.std_err } else { f64::NAN };
                            (ci.index, z, ci.estimate, ci.lo <= truth && truth <= ci.hi)
                        })
                        .collect(),
                );
            }
        }
    }
    if track_f {
        if let Ok(fhat) = sieve_fitted(&data, &est) {
            let diff: Vec<f64> = data
                .t()
                .iter()
                .zip(fhat.iter())
                .map(|(&t, fh)| fh - spec.f.curve.eval(t))
                .collect();
            out.f_error = Some(empirical_norm_sq(&diff));
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn run_reps(
    spec: &DgpSpec,
    search: &SearchConfig,
    kind: &PenaltyKind,
    n: usize,
    reps: usize,
    seed: u64,
    level: Option<f64>,
    track_f: bool,
) -> Vec<Replica> {
    (0..reps)
        .into_par_iter()
        .map(|rep| replicate(spec, search, kind, n, rep, seed, level, track_f))
        .collect()
}

fn check_common(spec: &DgpSpec, search: &SearchConfig, kind: &PenaltyKind, reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    spec.validate(search.b)?;
    kind.validate()?;
    if let Some(alpha) = search.alpha {
        spec.check_alpha(alpha)?;
    }
    Ok(())
}

/// Repeated generate-and-select at each sample size, reporting how often
/// the selected covariate set equals, strictly contains, or misses the
/// true support.
pub fn run_selection_experiment(
    spec: &DgpSpec,
    search: &SearchConfig,
    kind: &PenaltyKind,
    n_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_common(spec, search, kind, reps)?;
    if n_list.is_empty() {
        return Err(Error::InvalidConfig("empty sample-size list".into()));
    }
    let mut selection = Vec::new();
    let mut replications = Vec::new();
    for &n in n_list {
        let records: Vec<_> =
            run_reps(spec, search, kind, n, reps, seed, None, false).into_iter().map(|r| r.record).collect();
        selection.push(selection_row(n, &records));
        replications.extend(records);
    }
    Ok(ExperimentReport {
        experiment: ExperimentKind::Selection,
        seed,
        reps,
        search: search.clone(),
        penalty: *kind,
        truth: spec.support(),
        selection,
        coverage: None,
        rate: None,
        notes: Vec::new(),
        replications,
    })
}

/// Coverage of level-`level` intervals and normality of the standardized
/// coefficient errors at one sample size.
pub fn run_coverage_experiment(
    spec: &DgpSpec,
    search: &SearchConfig,
    kind: &PenaltyKind,
    n: usize,
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<ExperimentReport> {
    if reps < 100 {
        return Err(Error::InvalidConfig(format!("coverage needs at least 100 replications, got {reps}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level {level} outside (0, 1)")));
    }
    check_common(spec, search, kind, reps)?;
    let results = run_reps(spec, search, kind, n, reps, seed, Some(level), false);

    let q = spec.q();
    let mut z: Vec<Vec<f64>> = vec![Vec::new(); q];
    let mut covered = vec![0usize; q];
    let mut root_n_abs: Vec<Vec<f64>> = vec![Vec::new(); q];
    let mut s2 = Vec::new();
    for r in &results {
        if let Some(v) = r.sigma2 {
            s2.push(v);
        }
        for &(j, zj, est, hit) in r.ci.iter().flatten() {
            z[j].push(zj);
            covered[j] += hit as usize;
            root_n_abs[j].push((n as f64).sqrt() * est.abs());
        }
    }
    let rows = (0..q)
        .map(|j| {
            let included = z[j].len();
            let cov = (included > 0).then(|| covered[j] as f64 / included as f64);
            CoverageRow {
                index: j,
                beta: spec.beta[j],
                active: spec.beta[j] != 0.0,
                included,
                excluded_freq: 1.0 - included as f64 / reps as f64,
                coverage: cov,
                coverage_se: cov.map(|c| binomial_std_err(c, included)),
                ks: (included > 0).then(|| ks_test_standard_normal(&z[j])),
                mean_abs_root_n: (spec.beta[j] == 0.0 && included > 0)
                    .then(|| root_n_abs[j].iter().sum::<f64>() / included as f64),
            }
        })
        .collect();
    let records: Vec<_> = results.into_iter().map(|r| r.record).collect();
    Ok(ExperimentReport {
        experiment: ExperimentKind::Coverage,
        seed,
        reps,
        search: search.clone(),
        penalty: *kind,
        truth: spec.support(),
        selection: vec![selection_row(n, &records)],
        coverage: Some(CoverageSection {
            n,
            level,
            rows,
            mean_sigma2_hat: if s2.is_empty() { f64::NAN } else { s2.iter().sum::<f64>() / s2.len() as f64 },
            sigma2: spec.w_noise.variance(),
            label: "asymptotic, selection-consistent regime; intervals conditional on the selected set".into(),
        }),
        rate: None,
        notes: Vec::new(),
        replications: records,
    })
}

/// Median squared empirical error of `f̂` across a geometric list of sample
/// sizes, with `I_0` known and `K` chosen adaptively over the full grid.
pub fn run_rate_experiment(
    spec: &DgpSpec,
    b: u32,
    n_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let alpha = spec
        .f
        .smoothness
        .order()
        .ok_or_else(|| Error::InvalidSpec("rate experiments need a declared smoothness order for f".into()))?;
    let r = order_for_budget(b);
    if !(alpha > 0.5 && alpha < r as f64) {
        return Err(Error::InvalidSpec(format!(
            "declared alpha = {alpha} must lie in (1/2, r) with r = {r}"
        )));
    }
    if n_list.len() < 4 {
        return Err(Error::InvalidConfig("rate experiments need at least four sample sizes".into()));
    }
    let ratios: Vec<f64> = n_list.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    if ratios.iter().any(|q| (q / ratios[0] - 1.0).abs() > 0.02 || *q <= 1.0) {
        return Err(Error::InvalidConfig("sample sizes must form an increasing geometric sequence".into()));
    }
    let search = SearchConfig::case1(spec.support(), b);
    let kind = PenaltyKind::AdaptiveK;
    check_common(spec, &search, &kind, reps)?;

    let mut rows = Vec::new();
    let mut selection = Vec::new();
    let mut replications = Vec::new();
    for &n in n_list {
        let results = run_reps(spec, &search, &kind, n, reps, seed, None, true);
        let errors: Vec<f64> = results.iter().filter_map(|r| r.f_error).collect();
        let records: Vec<_> = results.into_iter().map(|r| r.record).collect();
        let sel = selection_row(n, &records);
        let grid = crate::selector::candidate_grid(&search, n, spec.q())?.grid.dims;
        rows.push(RateRow {
            n,
            median_error: median(&errors),
            modal_k: sel.modal_k,
            balancing_k: balancing_dimension(n, alpha),
            grid,
        });
        selection.push(sel);
        replications.extend(records);
    }

    let degenerate = rows.iter().any(|r| !(r.median_error > 1e-20));
    let fit = if degenerate {
        None
    } else {
        let x: Vec<f64> = rows.iter().map(|r| (r.n as f64 / (r.n as f64).ln()).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.median_error.ln()).collect();
        fit_line(&x, &y)
    };
    let slope_ci = fit.map(|f| (f.slope - 1.96 * f.slope_std_err, f.slope + 1.96 * f.slope_std_err));
    let mut notes = Vec::new();
    if degenerate {
        notes.push("errors vanish at some sample size; slope undefined".to_string());
    }
    Ok(ExperimentReport {
        experiment: ExperimentKind::Rate,
        seed,
        reps,
        search,
        penalty: kind,
        truth: spec.support(),
        selection,
        coverage: None,
        rate: Some(RateSection {
            alpha,
            b,
            expected_slope: -2.0 * alpha / (2.0 * alpha + 1.0),
            rows,
            fit,
            slope_ci,
            degenerate,
        }),
        notes,
        replications,
    })
}

/// Agreement between the semiparametric Case-3 selection and a BIC-style
/// parametric selection (`|I| ln n / n` at the same pilot `K`), as a
/// fraction of replications. Meant for `f ≡ 0` designs.
pub fn parametric_agreement(spec: &DgpSpec, a: f64, b: u32, n: usize, reps: usize, seed: u64) -> Result<f64> {
    let search = SearchConfig::case3(a, b);
    let kind = PenaltyKind::UnknownAlpha { a };
    check_common(spec, &search, &kind, reps)?;
    let agree: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<bool> {
            let data = generate(spec, n, replication_seed(seed, n, rep))?;
            let semi = select(&data, &search, &kind)?;
            let ln_n = (n as f64).ln();
            let best = semi
                .table
                .iter()
                .filter(|e| e.rank_ok)
                .min_by(|x, y| {
                    let cx = x.gamma_n.unwrap() + x.covariates.len() as f64 * ln_n / n as f64;
                    let cy = y.gamma_n.unwrap() + y.covariates.len() as f64 * ln_n / n as f64;
                    cx.total_cmp(&cy).then(x.covariates.len().cmp(&y.covariates.len()))
                })
                .expect("a rank-ok candidate exists");
            Ok(best.covariates == semi.selected_covariates())
        })
        .collect::<Result<_>>()?;
    Ok(agree.iter().filter(|a| **a).count() as f64 / reps as f64)
}
