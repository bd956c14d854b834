//! JSON report envelope and the payload shapes it carries.

use semipen_core::inference::InferenceReport;
use semipen_core::selector::LedgerEntry;
use semipen_core::sieve::{PilotDimension, SieveGrid};
use semipen_core::simlab::ReplicationRecord;
use semipen_core::{CaseKind, PenaltyKind};
use serde::Serialize;
use serde_json::Value;

/// Schema tag of every report this crate writes.
pub const SCHEMA: &str = "report-v1";

#[derive(Debug, Clone, Serialize)]
pub struct ReportEnvelope {
    pub schema: String,
    /// Version of the program that wrote the report.
    pub version: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub command: String,
    /// Parsed command line plus derived settings; enough to rerun.
    pub config: Value,
    pub payload: Value,
    pub warnings: Vec<String>,
}

impl ReportEnvelope {
    pub fn new(command: &str, config: Value, payload: Value, warnings: Vec<String>) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            command: command.to_string(),
            config,
            payload,
            warnings,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values serialize");
        s.push('\n');
        s
    }
}

/// One fitted model as reported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub covariates: Vec<usize>,
    pub covariate_names: Vec<String>,
    pub k: usize,
    pub r: usize,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma_n: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitPayload {
    pub model: ModelReport,
    pub lambda_norm_sq: f64,
    pub inference: InferenceReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectPayload {
    pub case: CaseKind,
    pub penalty_kind: PenaltyKind,
    pub b: u32,
    pub grid: SieveGrid,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot: Option<PilotDimension>,
    pub chosen: ModelReport,
    pub criterion: f64,
    pub penalty: f64,
    /// `false` when the estimate was truncated to zero.
    pub gamma_event: bool,
    pub lambda_norm_sq: f64,
    pub chosen_index: usize,
    pub inference: InferenceReport,
    pub ledger: Vec<LedgerEntry>,
}

/// Flat per-replication row for the CSV dump.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRow {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub outcome: String,
    pub selected: String,
    pub k: usize,
    pub gamma_n: f64,
    pub gamma_event: bool,
    pub beta: String,
    pub error: String,
}

impl From<&ReplicationRecord> for ReplicationRow {
    fn from(r: &ReplicationRecord) -> Self {
        let join = |v: Vec<String>| v.join(";");
        Self {
            n: r.n,
            rep: r.rep,
            seed: r.seed,
            outcome: serde_json::to_value(r.outcome)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            selected: join(r.selected.iter().map(|j| j.to_string()).collect()),
            k: r.k,
            gamma_n: r.gamma_n,
            gamma_event: r.gamma_event,
            beta: join(r.beta.iter().map(|b| b.to_string()).collect()),
            error: r.error.clone().unwrap_or_default(),
        }
    }
}
