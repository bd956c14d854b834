//! Subcommand implementations. Nothing here touches the file system except
//! to read inputs; outputs are returned for the caller to write.

use std::path::PathBuf;

use semipen_core::linmodel::{lambda_norm_sq, CovariateBox};
use semipen_core::simlab::dgp::{builtin_dgp, builtin_dgps, DgpSpec};
use semipen_core::simlab::{run_coverage_experiment, run_rate_experiment, run_selection_experiment};
use semipen_core::{
    fit_model, infer, select, CaseKind, Dataset, FitResult, ModelIndex, PenaltyKind, SearchConfig,
    SelectionResult,
};
use serde_json::{json, Value};

use crate::args::{
    CaseArg, Cli, Command, DataArgs, ExperimentArgs, ExperimentKindArg, FitArgs, PenaltyArg, SearchArgs,
    SelectArgs,
};
use crate::csvio::{load_csv, records_to_csv, Loaded, Roles};
use crate::error::{CliError, CliResult};
use crate::report::{FitPayload, ModelReport, ReplicationRow, ReportEnvelope, SelectPayload};

/// Everything a run produces: the envelope, a human summary, and any extra
/// files requested.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub envelope: ReportEnvelope,
    pub summary: String,
    pub out: Option<PathBuf>,
    pub extra_files: Vec<(PathBuf, String)>,
}

pub fn run(cli: &Cli) -> CliResult<RunOutput> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Catalog(o) => {
            let payload = serde_json::to_value(builtin_dgps()).expect("catalog serializes");
            let summary = builtin_dgps()
                .iter()
                .map(|e| format!("{:<12} {}", e.name, e.description))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(RunOutput {
                envelope: ReportEnvelope::new("catalog", echo(cli, json!({})), payload, Vec::new()),
                summary,
                out: o.out.clone(),
                extra_files: Vec::new(),
            })
        }
    }
}

fn echo(cli: &Cli, derived: Value) -> Value {
    json!({ "args": serde_json::to_value(cli).expect("arguments serialize"), "derived": derived })
}

fn check_level(level: f64) -> CliResult<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--level {level} must lie in (0, 1)")))
    }
}

fn load(data: &DataArgs) -> CliResult<Loaded> {
    let roles = Roles { y: data.y.clone(), t: data.t.clone(), x: data.x.clone() };
    load_csv(&data.csv, &roles, data.rescale_t)
}

fn column_indices(data: &Dataset, names: &[String]) -> CliResult<Vec<usize>> {
    let cols = data.names().map(|n| n.x.clone()).unwrap_or_default();
    names
        .iter()
        .map(|name| {
            cols.iter()
                .position(|c| c == name)
                .ok_or_else(|| CliError::Usage(format!("'{name}' is not a covariate column; covariates are {cols:?}")))
        })
        .collect()
}

fn model_report(data: &Dataset, fit: &FitResult) -> ModelReport {
    ModelReport {
        covariates: fit.model.covariates.clone(),
        covariate_names: fit.model.covariates.iter().map(|&j| data.covariate_name(j)).collect(),
        k: fit.model.k,
        r: fit.model.r,
        beta: fit.beta.clone(),
        delta: fit.delta.clone(),
        gamma_n: fit.gamma_n,
        condition: fit.condition,
    }
}

fn rescale_notes(loaded: &Loaded, warnings: &mut Vec<String>) -> Value {
    match loaded.rescale {
        Some(r) => {
            warnings.push(format!("T rescaled affinely from [{}, {}] to [0, 1]", r.min, r.max));
            json!({ "t_rescale": { "min": r.min, "max": r.max } })
        }
        None => json!({}),
    }
}

fn interval_lines(data: &Dataset, inf: &semipen_core::InferenceReport) -> Vec<String> {
    inf.intervals
        .iter()
        .map(|ci| {
            format!(
                "  {:<12} {:>12.6}  se {:.6}  {:.0}% CI [{:.6}, {:.6}]",
                data.covariate_name(ci.index),
                ci.estimate,
                ci.std_err,
                ci.level * 100.0,
                ci.lo,
                ci.hi
            )
        })
        .collect()
}

fn cmd_fit(a: &FitArgs) -> CliResult<RunOutput> {
    check_level(a.level)?;
    let r = semipen_core::sieve::order_for_budget(a.b);
    if r == 0 {
        return Err(CliError::Usage(format!("--b {} gives polynomial order 0; use b >= 3", a.b)));
    }
    if a.k == 0 || !a.k.is_power_of_two() {
        return Err(CliError::Usage(format!("--k {} must be a power of two", a.k)));
    }
    let loaded = load(&a.data)?;
    let data = &loaded.dataset;
    let covs = column_indices(data, &a.model)?;
    let mut warnings = Vec::new();
    let derived = rescale_notes(&loaded, &mut warnings);
    let fit = fit_model(data, &ModelIndex::new(covs, a.k, r))?;
    let inference = infer(&fit, data.q(), a.level)?;
    let lam = lambda_norm_sq(&fit, &CovariateBox::bounding(data))?;
    let payload = FitPayload { model: model_report(data, &fit), lambda_norm_sq: lam, inference };

    let mut summary = vec![
        format!("model: {:?}, K = {}, r = {}", payload.model.covariate_names, fit.model.k, r),
        format!("gamma_n = {:.6}, sigma2_hat = {:.6}", fit.gamma_n, payload.inference.sigma2_hat),
    ];
    summary.extend(interval_lines(data, &payload.inference));
    Ok(RunOutput {
        envelope: ReportEnvelope::new(
            "fit",
            echo(&Cli { command: Command::Fit(a.clone()) }, derived),
            serde_json::to_value(&payload).expect("payload serializes"),
            warnings,
        ),
        summary: summary.join("\n"),
        out: a.output.out.clone(),
        extra_files: Vec::new(),
    })
}

/// Builds the search configuration; covariate names in `--i0` are resolved
/// through `resolve`.
fn search_config(
    s: &SearchArgs,
    default_b: u32,
    resolve: impl Fn(&[String]) -> CliResult<Vec<usize>>,
) -> CliResult<(SearchConfig, PenaltyKind)> {
    let b = s.b.unwrap_or(default_b);
    let config = match s.case {
        CaseArg::Case0 => {
            return Err(CliError::Usage("case0 (a fixed model) is only available through `fit`".into()))
        }
        CaseArg::Case1 => {
            let names = s.i0.as_ref().ok_or_else(|| CliError::Usage("case1 requires --i0".into()))?;
            SearchConfig::case1(resolve(names)?, b)
        }
        CaseArg::Case2 => {
            SearchConfig::case2(s.alpha.ok_or_else(|| CliError::Usage("case2 requires --alpha".into()))?, b)
        }
        CaseArg::Case3 => SearchConfig::case3(s.a.ok_or_else(|| CliError::Usage("case3 requires --a".into()))?, b),
        CaseArg::Full => SearchConfig::full(b),
    };
    let kind = match s.penalty {
        PenaltyArg::Default => PenaltyKind::for_case(&config)?,
        PenaltyArg::Additive => PenaltyKind::GenericAdditive {
            c: s.c.ok_or_else(|| CliError::Usage("--penalty additive requires --c".into()))?,
        },
    };
    kind.validate()?;
    Ok((config, kind))
}

fn selection_warnings(sel: &SelectionResult, warnings: &mut Vec<String>) {
    if let Some(p) = sel.pilot.filter(|p| p.clamped) {
        warnings.push(format!(
            "pilot dimension {} (target {:.3}) clamped to {} to stay inside the grid {:?}",
            p.unclamped, p.target, p.k, sel.grid.dims
        ));
    }
    let rd = sel.rank_deficient_count();
    if rd > 0 {
        warnings.push(format!("{rd} rank-deficient candidate(s) skipped"));
    }
    if !sel.gamma_event {
        warnings.push(format!(
            "lambda norm {:.3e} outside the truncation bound; the reported estimator is zero",
            sel.lambda_norm_sq
        ));
    }
}

/// Builds the payload of `select` from a library result.
pub fn select_payload(data: &Dataset, b: u32, sel: &SelectionResult, level: f64) -> CliResult<SelectPayload> {
    Ok(SelectPayload {
        case: sel.case,
        penalty_kind: sel.penalty_kind,
        b,
        grid: sel.grid.clone(),
        pilot: sel.pilot,
        chosen: model_report(data, &sel.chosen),
        criterion: sel.criterion,
        penalty: sel.penalty,
        gamma_event: sel.gamma_event,
        lambda_norm_sq: sel.lambda_norm_sq,
        chosen_index: sel.chosen_index,
        inference: infer(&sel.chosen, data.q(), level)?,
        ledger: sel.table.clone(),
    })
}

fn cmd_select(a: &SelectArgs) -> CliResult<RunOutput> {
    check_level(a.level)?;
    let loaded = load(&a.data)?;
    let data = &loaded.dataset;
    let (config, kind) = search_config(&a.search, 3, |names| column_indices(data, names))?;
    let mut warnings = Vec::new();
    let mut derived = rescale_notes(&loaded, &mut warnings);
    derived["search"] = serde_json::to_value(&config).expect("config serializes");
    derived["penalty"] = serde_json::to_value(kind).expect("penalty serializes");
    let sel = select(data, &config, &kind)?;
    selection_warnings(&sel, &mut warnings);
    let payload = select_payload(data, config.b, &sel, a.level)?;
    if config.case != CaseKind::Case1 {
        warnings.push("intervals are conditional on the selected covariate set".into());
    }

    let mut summary = vec![
        format!("case {:?}, penalty {:?}", sel.case, sel.penalty_kind),
        format!(
            "selected: {:?}, K = {}, r = {}",
            payload.chosen.covariate_names, payload.chosen.k, payload.chosen.r
        ),
        format!(
            "gamma_n = {:.6}, penalty = {:.6}, criterion = {:.6}",
            sel.chosen.gamma_n, sel.penalty, sel.criterion
        ),
    ];
    summary.extend(interval_lines(data, &payload.inference));
    Ok(RunOutput {
        envelope: ReportEnvelope::new(
            "select",
            echo(&Cli { command: Command::Select(a.clone()) }, derived),
            serde_json::to_value(&payload).expect("payload serializes"),
            warnings,
        ),
        summary: summary.join("\n"),
        out: a.output.out.clone(),
        extra_files: Vec::new(),
    })
}

fn experiment_spec(a: &ExperimentArgs) -> CliResult<(String, DgpSpec)> {
    match (&a.dgp, &a.spec) {
        (Some(name), None) => builtin_dgp(name)
            .map(|e| (name.clone(), e.spec))
            .ok_or_else(|| CliError::Usage(format!("unknown design '{name}'; run `semipen catalog`"))),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
            let spec: DgpSpec = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("design file {}: {e}", path.display())))?;
            Ok((path.display().to_string(), spec))
        }
        (None, None) => Ok(("default".into(), builtin_dgp("default").expect("default design exists").spec)),
        (Some(_), Some(_)) => Err(CliError::Usage("--dgp and --spec are exclusive".into())),
    }
}

fn cmd_experiment(a: &ExperimentArgs) -> CliResult<RunOutput> {
    check_level(a.level)?;
    if a.n.is_empty() {
        return Err(CliError::Usage("--n needs at least one sample size".into()));
    }
    let (dgp_name, spec) = experiment_spec(a)?;
    let q = spec.q();
    let resolve = |names: &[String]| -> CliResult<Vec<usize>> {
        names
            .iter()
            .map(|s| match s.parse::<usize>() {
                Ok(j) if j < q => Ok(j),
                _ => Err(CliError::Usage(format!("--i0 entry '{s}' must be a covariate index below {q}"))),
            })
            .collect()
    };
    let mut search = a.search.clone();
    let mut warnings = Vec::new();
    if search.case == CaseArg::Case1 && search.i0.is_none() {
        search.i0 = Some(spec.support().iter().map(|j| j.to_string()).collect());
        warnings.push("case1 without --i0: using the design's true support".into());
    }
    let default_b = if a.kind == ExperimentKindArg::Rate { 5 } else { 3 };

    let report = match a.kind {
        ExperimentKindArg::Selection => {
            let (config, kind) = search_config(&search, default_b, resolve)?;
            run_selection_experiment(&spec, &config, &kind, &a.n, a.reps, a.seed)?
        }
        ExperimentKindArg::Coverage => {
            if a.n.len() != 1 {
                return Err(CliError::Usage("coverage experiments take a single --n".into()));
            }
            let (config, kind) = search_config(&search, default_b, resolve)?;
            run_coverage_experiment(&spec, &config, &kind, a.n[0], a.reps, a.level, a.seed)?
        }
        ExperimentKindArg::Rate => {
            run_rate_experiment(&spec, search.b.unwrap_or(default_b), &a.n, a.reps, a.seed)?
        }
    };
    let failed: usize = report.selection.iter().map(|r| r.failed).sum();
    if failed > 0 {
        warnings.push(format!("{failed} replication(s) failed; see the per-replication dump"));
    }
    let truncated: usize = report.selection.iter().map(|r| r.truncated).sum();
    if truncated > 0 {
        warnings.push(format!("{truncated} replication(s) fell outside the truncation bound"));
    }
    warnings.extend(report.notes.iter().cloned());

    let mut extra_files = Vec::new();
    if let Some(path) = &a.dump_reps {
        let rows: Vec<ReplicationRow> = report.replications.iter().map(ReplicationRow::from).collect();
        extra_files.push((path.clone(), records_to_csv(&rows)?));
    }

    let mut summary = Vec::new();
    for row in &report.selection {
        summary.push(format!(
            "n = {:>6}: correct {:.3} (se {:.3}), overfit {:.3}, underfit {:.3}, modal K {:?}",
            row.n, row.freq_correct, row.se_correct, row.freq_overfit, row.freq_underfit, row.modal_k
        ));
    }
    if let Some(cov) = &report.coverage {
        for row in cov.rows.iter().filter(|r| r.coverage.is_some()) {
            summary.push(format!(
                "beta_{}: coverage {:.3}, KS p {:.3}",
                row.index,
                row.coverage.unwrap_or(f64::NAN),
                row.ks.map(|k| k.p_value).unwrap_or(f64::NAN)
            ));
        }
    }
    if let Some(rate) = &report.rate {
        match rate.fit {
            Some(f) => summary.push(format!(
                "slope {:.3} (expected {:.3}), R^2 {:.3}",
                f.slope, rate.expected_slope, f.r_squared
            )),
            None => summary.push("slope undefined (degenerate errors)".into()),
        }
    }

    let derived = json!({ "dgp": dgp_name, "spec": spec, "search": report.search, "penalty": report.penalty });
    let mut payload = serde_json::to_value(&report).expect("report serializes");
    payload["dgp"] = json!(dgp_name);
    Ok(RunOutput {
        envelope: ReportEnvelope::new(
            "experiment",
            echo(&Cli { command: Command::Experiment(a.clone()) }, derived),
            payload,
            warnings,
        ),
        summary: summary.join("\n"),
        out: a.output.out.clone(),
        extra_files,
    })
}
