//! Maximum correlation modelling: single-equation models with multiple
//! variables on both sides, fitted by maximizing the correlation between
//! the two weighted composites subject to linear constraints on the
//! weights.
//!
//! The crate provides:
//! - [`dataset`]: CSV ingestion, side tagging, and derived-column
//!   transforms with lineage.
//! - [`stats`]: composites, Pearson correlation, and its analytic gradient.
//! - [`solver`]: the constrained maximizer, with multi-start verification
//!   and a target-correlation mode.
//! - [`cca`]: the classical eigen-decomposition solution of the
//!   unconstrained problem, used as a correctness reference.
//! - [`baselines`]: the least-squares alternative and its normalization
//!   dependence, plus an orthogonal-distance line fit.
//! - [`model`]: turning a fit into a predictive equation over the original
//!   variables.
//! - [`resonance`]: exhaustive integer-coefficient search for
//!   commensurabilities.

pub mod baselines;
pub mod cca;
pub mod dataset;
pub mod error;
pub mod model;
pub mod resonance;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
