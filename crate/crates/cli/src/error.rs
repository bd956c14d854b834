use thiserror::Error;

/// Everything a command can fail with, mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("T = {value} at row {row} lies outside [0, 1]; pass --rescale-t to map it affinely")]
    Domain { row: usize, value: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 ok, 1 usage, 2 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<semipen_core::Error> for CliError {
    fn from(e: semipen_core::Error) -> Self {
        use semipen_core::Error as E;
        match e {
            E::RankDeficient { .. } | E::AllCandidatesRankDeficient { .. } | E::DegenerateDoF { .. } => {
                CliError::Numerical(e.to_string())
            }
            E::Domain { value, row } => CliError::Domain { row: row.map_or(0, |r| r + 1), value },
            other => CliError::Usage(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
