//! Optimum sample allocation for multivariate stratified random sampling.
//!
//! The crate bundles four layers:
//!
//! - [`matcalc`]: a small dense matrix kernel with the half-vectorization
//!   operators (`vec`, `vech`, Kronecker, commutation and duplication
//!   matrices) that the moment formulas are written in.
//! - [`strata`] and [`estimators`]: the stratified-population data model and
//!   the closed-form moments of the covariance estimator of the stratified
//!   mean.
//! - [`distributions`] and [`solvers`]: scalar distribution utilities and the
//!   cost-minimizing integer allocation programs (per-variable, per-variable
//!   chance, trace, trace chance and determinant chance variants) solved by
//!   branch and bound over a Lagrangian relaxation.
//! - [`simulator`]: a synthetic-population Monte Carlo harness that checks
//!   the normal approximation and the empirical coverage of the chance
//!   constraints.

// Indexed loops over small dense matrices are the house style here.
#![allow(clippy::needless_range_loop)]

pub mod distributions;
pub mod estimators;
pub mod matcalc;
pub mod simulator;
pub mod solvers;
pub mod strata;

pub use estimators::{Allocation, MomentReport};
pub use matcalc::{Matrix, VechVector};
pub use solvers::{Formulation, ProblemSpec, SolveReport};
pub use strata::{RawStratumData, StratumSummary, SurveyFrame};
