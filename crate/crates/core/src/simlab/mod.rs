//! Simulation laboratory: data-generating processes and replicated
//! experiments for selection consistency, coverage and convergence rates.

pub mod dgp;
pub mod experiment;

pub use dgp::{builtin_dgp, builtin_dgps, generate, CatalogEntry, DgpSpec};
pub use experiment::{
    run_coverage_experiment, run_rate_experiment, run_selection_experiment, ExperimentKind,
    ExperimentReport, ReplicationRecord, SelectionOutcome,
};
