use std::path::{Path, PathBuf};

use clap::Parser;
use semipen_cli::commands::select_payload;
use semipen_cli::{dataset_to_csv, load_csv, run, Cli, Roles};
use semipen_core::simlab::{builtin_dgp, generate, run_rate_experiment, run_selection_experiment};
use semipen_core::{select, ColumnNames, PenaltyKind, SearchConfig};
use serde_json::Value;

fn sample_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let spec = builtin_dgp("default").unwrap().spec;
    let names = ColumnNames { y: "y".into(), t: "t".into(), x: (0..4).map(|j| format!("x{j}")).collect() };
    let data = generate(&spec, n, seed).unwrap().with_names(names).unwrap();
    let path = dir.join("sample.csv");
    std::fs::write(&path, dataset_to_csv(&data).unwrap()).unwrap();
    path
}

fn run_args(args: &[&str]) -> semipen_cli::RunOutput {
    let mut full = vec!["semipen"];
    full.extend_from_slice(args);
    run(&Cli::try_parse_from(full).unwrap()).unwrap()
}

/// Checks a report against the required keys and basic types of the
/// published schema.
fn check_schema(report: &Value) {
    let schema: Value =
        serde_json::from_str(include_str!("../schema/report-v1.schema.json")).unwrap();
    let obj = report.as_object().unwrap();
    for key in schema["required"].as_array().unwrap() {
        assert!(obj.contains_key(key.as_str().unwrap()), "missing {key}");
    }
    let props = schema["properties"].as_object().unwrap();
    for key in obj.keys() {
        assert!(props.contains_key(key), "unexpected key {key}");
    }
    assert_eq!(report["schema"], "report-v1");
    assert!(chrono::DateTime::parse_from_rfc3339(report["timestamp"].as_str().unwrap()).is_ok());
    let commands = props["command"]["enum"].as_array().unwrap();
    assert!(commands.contains(&report["command"]));
    assert!(report["config"]["args"].is_object() && report["config"]["derived"].is_object());
    assert!(report["warnings"].as_array().unwrap().iter().all(Value::is_string));
}

fn envelope_json(out: &semipen_cli::RunOutput) -> Value {
    let v: Value = serde_json::from_str(&out.envelope.to_json()).unwrap();
    check_schema(&v);
    v
}

#[test]
fn select_payload_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 600, 5);
    let out = run_args(&["select", "--csv", csv.to_str().unwrap(), "--y", "y", "--t", "t", "--a", "0.1"]);
    let report = envelope_json(&out);

    let roles = Roles { y: "y".into(), t: "t".into(), x: None };
    let data = load_csv(&csv, &roles, false).unwrap().dataset;
    let config = SearchConfig::case3(0.1, 3);
    let kind = PenaltyKind::for_case(&config).unwrap();
    let sel = select(&data, &config, &kind).unwrap();
    let direct = serde_json::to_value(select_payload(&data, 3, &sel, 0.95).unwrap()).unwrap();
    assert_eq!(report["payload"], direct);
    assert_eq!(report["payload"]["chosen"]["covariate_names"], serde_json::json!(["x0", "x2"]));
}

#[test]
fn repeated_runs_give_identical_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 400, 9);
    let args = ["select", "--csv", csv.to_str().unwrap(), "--y", "y", "--t", "t", "--case", "full"];
    let a = envelope_json(&run_args(&args));
    let b = envelope_json(&run_args(&args));
    assert_eq!(
        serde_json::to_string(&a["payload"]).unwrap(),
        serde_json::to_string(&b["payload"]).unwrap()
    );
    assert_eq!(a["config"], b["config"]);
}

#[test]
fn fit_and_case1_resolve_names() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 500, 2);
    let c = csv.to_str().unwrap();
    let fit = envelope_json(&run_args(&["fit", "--csv", c, "--y", "y", "--t", "t", "--model", "x2", "x0", "--k", "4"]));
    assert_eq!(fit["payload"]["model"]["covariates"], serde_json::json!([0, 2]));
    assert_eq!(fit["payload"]["model"]["k"], 4);
    let sel = envelope_json(&run_args(&[
        "select", "--csv", c, "--y", "y", "--t", "t", "--case", "case1", "--i0", "x0,x2",
    ]));
    assert_eq!(sel["payload"]["chosen"]["covariates"], serde_json::json!([0, 2]));
    let missing = Cli::try_parse_from(["semipen", "select", "--csv", c, "--y", "y", "--t", "t", "--case", "case1"]);
    assert!(run(&missing.unwrap()).is_err());
}

#[test]
fn selection_experiment_matches_simlab() {
    let out = run_args(&[
        "experiment", "selection", "--dgp", "default", "--n", "250,1000", "--reps", "20", "--seed", "17", "--a", "0.1",
    ]);
    let report = envelope_json(&out);
    let rows = report["payload"]["selection"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["n"], 250);
    assert_eq!(rows[1]["n"], 1000);

    let spec = builtin_dgp("default").unwrap().spec;
    let config = SearchConfig::case3(0.1, 3);
    let kind = PenaltyKind::for_case(&config).unwrap();
    let direct = run_selection_experiment(&spec, &config, &kind, &[250, 1000], 20, 17).unwrap();
    let direct = serde_json::to_value(&direct).unwrap();
    assert_eq!(report["payload"]["selection"], direct["selection"]);
}

#[test]
fn rate_experiment_reports_slope_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("reps.csv");
    let out = run_args(&[
        "experiment", "rate", "--dgp", "smooth-f", "--n", "256,512,1024,2048", "--reps", "4", "--seed", "3",
        "--dump-reps", dump.to_str().unwrap(),
    ]);
    let report = envelope_json(&out);
    assert!(report["payload"]["rate"]["fit"]["slope"].is_f64());
    let spec = builtin_dgp("smooth-f").unwrap().spec;
    let direct = run_rate_experiment(&spec, 5, &[256, 512, 1024, 2048], 4, 3).unwrap();
    assert_eq!(report["payload"]["rate"], serde_json::to_value(&direct).unwrap()["rate"]);

    assert_eq!(out.extra_files.len(), 1);
    assert!(!dump.exists(), "commands never write files themselves");
    let text = &out.extra_files[0].1;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.records().count(), 16);
}

#[test]
fn catalog_lists_every_design() {
    let report = envelope_json(&run_args(&["catalog"]));
    let names: Vec<&str> = report["payload"].as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"default") && names.contains(&"smooth-f"));
}
