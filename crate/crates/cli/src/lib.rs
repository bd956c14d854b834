//! Command-line front end: CSV ingestion, model fitting and selection on
//! user data, Monte Carlo experiment drivers, and JSON report emission.

pub mod args;
pub mod commands;
pub mod csvio;
pub mod error;
pub mod report;

pub use args::{Cli, Command, THREADS_ENV};
pub use commands::{run, RunOutput};
pub use csvio::{dataset_to_csv, load_csv, write_atomic, Roles};
pub use error::{CliError, CliResult};
pub use report::{ReportEnvelope, SCHEMA};

/// Writes the JSON report (to `--out` or stdout) and any extra files, then
/// prints the human summary (stdout when the report went to a file,
/// stderr otherwise). Files are written only once the run has succeeded.
pub fn emit(output: &RunOutput) -> CliResult<()> {
    for (path, contents) in &output.extra_files {
        write_atomic(path, contents)?;
    }
    let json = output.envelope.to_json();
    match &output.out {
        Some(path) => {
            write_atomic(path, &json)?;
            println!("{}", output.summary);
        }
        None => {
            print!("{json}");
            eprintln!("{}", output.summary);
        }
    }
    for w in &output.envelope.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

/// Configures the global thread pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV}={raw} must be a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {threads} threads: {e}")))
}
