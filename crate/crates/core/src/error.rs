use thiserror::Error;

/// Errors raised by the estimation, selection and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension grid is empty for n = {n}, b = {b} (need n / ln n > 2^b)")]
    GridEmpty { n: usize, b: u32 },

    #[error("value {value} outside [0, 1]{}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Domain { value: f64, row: Option<usize> },

    #[error("candidate {model} is rank deficient (smallest/largest singular value = {ratio:e})")]
    RankDeficient { model: String, ratio: f64 },

    #[error("all {candidates} candidate models are rank deficient")]
    AllCandidatesRankDeficient { candidates: usize },

    #[error("missing parameter: {0}")]
    MissingParameter(&'static str),

    #[error("degrees of freedom exhausted: n = {n}, model dimension = {dim}")]
    DegenerateDoF { n: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data-generating spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
