//! Penalized least-squares model selection for the partially linear model
//! `Y = β'X + f(T) + W`.
//!
//! The unknown function `f` is approximated on dyadic piecewise-polynomial
//! sieves ([`sieve`]), each candidate `(I, K)` is fitted by least squares
//! ([`linmodel`]), and the covariate subset and sieve dimension are chosen
//! jointly by minimizing a penalized residual criterion ([`selector`]).
//! [`inference`] provides plug-in intervals for the selected coefficients
//! and [`simlab`] runs the Monte Carlo checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod inference;
pub mod linmodel;
pub mod selector;
pub mod sieve;
pub mod simlab;
pub mod stats;

pub use error::{Error, Result};
pub use inference::{confidence_intervals, embed_v, infer, sigma2_hat, InferenceReport};
pub use linmodel::{fit_model, ColumnNames, Dataset, FitResult, ModelIndex};
pub use selector::{penalty, select, CaseKind, PenaltyKind, SearchConfig, SelectionResult};
pub use sieve::{BasisSpec, SieveConfig, SieveGrid};
