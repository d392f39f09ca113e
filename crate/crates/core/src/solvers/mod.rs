//! Cost-minimizing integer allocation programs.
//!
//! All formulations minimize the linear sampling cost `c'n + c0` over
//! integer allocations `2 <= n_h <= N_h` (optionally with a fixed total
//! sample size), subject to one of:
//!
//! - per-variable variance budgets `Var_hat_j(n) <= v0_j`;
//! - their chance-constrained counterparts
//!   `E[Var_hat_j] + e_p0 sqrt(Var[Var_hat_j]) <= v0_j`;
//! - a deterministic trace budget `tr Cov_hat(n) <= tau`;
//! - the trace chance constraint `E[tr] + e_p0 sqrt(Var[tr]) <= tau`;
//! - the determinant-law constraint `tau |det N(n)|^{1/4} >= r_p0` (G = 2).
//!
//! [`solve`] runs a branch and bound with Lagrangian dual bounds;
//! [`enumerate_oracle`] scans small integer boxes exhaustively and is the
//! reference the solver is tested against; [`check_allocation`] evaluates a
//! user-supplied allocation without optimizing.

mod bb;
mod constraints;
mod oracle;
mod relax;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{normal_quantile, DistError};
use crate::estimators::{self, Allocation, EstimatorError};
use crate::strata::SurveyFrame;

pub use constraints::{ConstraintReport, Sense};
use constraints::Constraint;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error("stratum {} carries no vech fourth moment matrix (needed by the chance constraint)", stratum + 1)]
    MissingFourthMoment { stratum: usize },
    #[error("stratum {} carries no vec fourth moment matrix (needed by the determinant constraint)", stratum + 1)]
    MissingVecFourthMoment { stratum: usize },
    #[error("stratum {} has a negative fourth-moment excess; its variance terms are meaningless", stratum + 1)]
    NegativeFourthMomentExcess { stratum: usize },
    #[error("the determinant formulation is defined for 2 characteristics, frame has {g}")]
    DeterminantNeedsTwoCharacteristics { g: usize },
    #[error("integer box holds about {points:e} points, beyond the exhaustive-scan limit of 1e6")]
    BoxTooLarge { points: f64 },
}

/// Which allocation program to solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Formulation {
    /// `Var_hat_j(n) <= v0_j` per characteristic; `v0_j = inf` disables a
    /// characteristic.
    PerVariable { v0: Vec<f64> },
    /// Chance version of the per-variable budgets at probability `p0`.
    PrekopaChance { v0: Vec<f64>, p0: f64 },
    /// `tr Cov_hat(n) <= tau`.
    TraceDeterministic { tau: f64 },
    /// `E[tr] + e_p0 sqrt(Var[tr]) <= tau`.
    TraceChance { tau: f64, p0: f64 },
    /// `tau |det N(n)|^{1/4} >= r_p0`, defined for `G = 2`.
    DetChance { tau: f64, p0: f64 },
}

/// A formulation plus the optional fixed total sample size. Bounds are
/// always `2 <= n_h <= N_h`, taken from the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub formulation: Formulation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_n: Option<u64>,
}

impl ProblemSpec {
    pub fn new(formulation: Formulation) -> Self {
        Self { formulation, total_n: None }
    }

    pub fn with_total(mut self, total_n: u64) -> Self {
        self.total_n = Some(total_n);
        self
    }
}

/// Outcome of [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub feasible: bool,
    /// Best integer-feasible allocation found; absent when the problem is
    /// infeasible.
    pub allocation: Option<Allocation>,
    /// `c'n + c0` of the returned allocation.
    pub objective_cost: Option<f64>,
    /// Every constraint evaluated at the returned allocation (at the most
    /// favorable corner when infeasible, as the certificate).
    pub constraint_values: Vec<ConstraintReport>,
    pub nodes_explored: u64,
    /// Lower bound on `c'n + c0` from the root relaxation.
    pub relaxation_bound: Option<f64>,
    /// True when the search closed its optimality proof (always true for
    /// the exhaustive oracle); false only if the node cap was hit.
    pub proven_optimal: bool,
    pub wall_time_seconds: f64,
}

/// Outcome of [`check_allocation`]: the constraint table of one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub allocation: Allocation,
    pub objective_cost: f64,
    pub feasible: bool,
    pub constraint_values: Vec<ConstraintReport>,
}

fn validate_spec(spec: &ProblemSpec, frame: &SurveyFrame) -> Result<(), SolveError> {
    let check_v0 = |v0: &[f64]| -> Result<(), SolveError> {
        if v0.len() != frame.g() {
            return Err(SolveError::InvalidSpec(format!(
                "v0 has {} entries for {} characteristics",
                v0.len(),
                frame.g()
            )));
        }
        if v0.iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(SolveError::InvalidSpec("every v0 entry must be positive".into()));
        }
        if v0.iter().all(|v| v.is_infinite()) {
            return Err(SolveError::InvalidSpec("at least one v0 entry must be finite".into()));
        }
        Ok(())
    };
    let check_p0 = |p0: f64| -> Result<(), SolveError> {
        if p0.is_nan() || p0 <= 0.0 || p0 >= 1.0 {
            return Err(SolveError::InvalidSpec(format!("p0 must lie in (0, 1), got {p0}")));
        }
        Ok(())
    };
    let check_tau = |tau: f64| -> Result<(), SolveError> {
        if tau.is_nan() || tau < 0.0 || tau.is_infinite() {
            return Err(SolveError::InvalidSpec(format!(
                "tau must be a nonnegative real, got {tau}"
            )));
        }
        Ok(())
    };
    match &spec.formulation {
        Formulation::PerVariable { v0 } => check_v0(v0)?,
        Formulation::PrekopaChance { v0, p0 } => {
            check_v0(v0)?;
            check_p0(*p0)?;
        }
        Formulation::TraceDeterministic { tau } => check_tau(*tau)?,
        Formulation::TraceChance { tau, p0 } => {
            check_tau(*tau)?;
            check_p0(*p0)?;
        }
        Formulation::DetChance { tau, p0 } => {
            check_tau(*tau)?;
            check_p0(*p0)?;
        }
    }
    Ok(())
}

/// Quantile `e_p0` with the exact-zero median short-circuit, so that
/// `p0 = 0.5` reduces chance constraints to their mean form bit-exactly.
fn e_quantile(p0: f64) -> Result<f64, SolveError> {
    if p0 == 0.5 {
        return Ok(0.0);
    }
    Ok(normal_quantile(p0)?)
}

fn build_constraints(
    spec: &ProblemSpec,
    frame: &SurveyFrame,
    require_solver_grade: bool,
) -> Result<Vec<Constraint>, SolveError> {
    validate_spec(spec, frame)?;
    Ok(match &spec.formulation {
        Formulation::PerVariable { v0 } => constraints::per_variable_rows(frame, v0),
        Formulation::PrekopaChance { v0, p0 } => {
            constraints::prekopa_rows(frame, v0, e_quantile(*p0)?)?
        }
        Formulation::TraceDeterministic { tau } => {
            vec![constraints::trace_deterministic_row(frame, *tau)]
        }
        Formulation::TraceChance { tau, p0 } => {
            vec![constraints::trace_chance_row(frame, *tau, e_quantile(*p0)?)?]
        }
        Formulation::DetChance { tau, p0 } => {
            vec![constraints::det_chance_row(frame, *tau, *p0, require_solver_grade)?]
        }
    })
}

fn frame_costs(frame: &SurveyFrame) -> Vec<f64> {
    frame.strata().iter().map(|s| s.unit_cost).collect()
}

fn frame_sensitivity(frame: &SurveyFrame) -> Vec<f64> {
    (0..frame.len())
        .map(|h| {
            let w = frame.relative_size(h);
            let s_max = (0..frame.g())
                .map(|j| frame.stratum(h).covariance.get(j, j))
                .fold(0.0f64, f64::max);
            w * w * s_max
        })
        .collect()
}

fn constraint_rows_at(
    rows: &[Constraint],
    spec: &ProblemSpec,
    n: &[u64],
) -> Vec<ConstraintReport> {
    let nf: Vec<f64> = n.iter().map(|&v| v as f64).collect();
    let mut out: Vec<ConstraintReport> = rows.iter().map(|c| c.report_row(&nf)).collect();
    if let Some(t) = spec.total_n {
        let total = n.iter().sum::<u64>() as f64;
        out.push(ConstraintReport {
            name: "total_n".into(),
            value: total,
            bound: t as f64,
            sense: Sense::Eq,
            slack: t as f64 - total,
        });
    }
    out
}

/// Certificate rows for an infeasible problem: every constraint evaluated at
/// its most favorable corner, so at least one row still shows a violation.
fn infeasibility_certificate(
    rows: &[Constraint],
    spec: &ProblemSpec,
    frame: &SurveyFrame,
) -> Vec<ConstraintReport> {
    let lo: Vec<f64> = frame.strata().iter().map(|_| 2.0).collect();
    let hi: Vec<f64> = frame.strata().iter().map(|s| s.population_size as f64).collect();
    let mut out = Vec::with_capacity(rows.len());
    for c in rows {
        let g_lo = c.eval(&lo);
        let g_hi = c.eval(&hi);
        let corner: &[f64] = if g_lo <= g_hi { &lo } else { &hi };
        out.push(c.report_row(corner));
    }
    if let Some(t) = spec.total_n {
        let sum_lo = 2.0 * frame.len() as f64;
        let sum_hi: f64 = hi.iter().sum();
        let nearest = (t as f64).clamp(sum_lo, sum_hi);
        out.push(ConstraintReport {
            name: "total_n".into(),
            value: nearest,
            bound: t as f64,
            sense: Sense::Eq,
            slack: t as f64 - nearest,
        });
    }
    out
}

/// Minimizes the sampling cost by branch and bound. Returns the best
/// integer-feasible allocation with a proven relaxation lower bound, or an
/// infeasibility report whose constraint rows certify that even the most
/// favorable corner of the box violates some constraint.
pub fn solve(spec: &ProblemSpec, frame: &SurveyFrame) -> Result<SolveReport, SolveError> {
    let started = Instant::now();
    let rows = build_constraints(spec, frame, true)?;
    let costs = frame_costs(frame);
    let sensitivity = frame_sensitivity(frame);
    let lo: Vec<u64> = frame.strata().iter().map(|_| 2).collect();
    let hi: Vec<u64> = frame.strata().iter().map(|s| s.population_size).collect();

    let outcome = bb::branch_and_bound(&bb::BbProblem {
        costs: &costs,
        lo: &lo,
        hi: &hi,
        constraints: &rows,
        total_n: spec.total_n,
        sensitivity: &sensitivity,
        node_cap: 500_000,
    });

    let wall = started.elapsed().as_secs_f64();
    match outcome.best {
        Some((n, cost)) => {
            let allocation = Allocation::new(n.clone(), frame)?;
            Ok(SolveReport {
                feasible: true,
                objective_cost: Some(cost + frame.fixed_cost()),
                constraint_values: constraint_rows_at(&rows, spec, &n),
                allocation: Some(allocation),
                nodes_explored: outcome.nodes_explored,
                relaxation_bound: outcome.root_bound.map(|b| b + frame.fixed_cost()),
                proven_optimal: outcome.proven,
                wall_time_seconds: wall,
            })
        }
        None => Ok(SolveReport {
            feasible: false,
            allocation: None,
            objective_cost: None,
            constraint_values: infeasibility_certificate(&rows, spec, frame),
            nodes_explored: outcome.nodes_explored,
            relaxation_bound: None,
            proven_optimal: outcome.proven,
            wall_time_seconds: wall,
        }),
    }
}

/// Exhaustive scan of the integer box; exact reference optimum for small
/// instances (at most 1e6 points).
pub fn enumerate_oracle(
    spec: &ProblemSpec,
    frame: &SurveyFrame,
) -> Result<SolveReport, SolveError> {
    let started = Instant::now();
    let rows = build_constraints(spec, frame, true)?;
    let outcome = oracle::scan(frame, &rows, spec.total_n)?;
    let wall = started.elapsed().as_secs_f64();
    match outcome.best {
        Some((n, cost)) => Ok(SolveReport {
            feasible: true,
            objective_cost: Some(cost + frame.fixed_cost()),
            constraint_values: constraint_rows_at(&rows, spec, &n),
            allocation: Some(Allocation::new(n, frame)?),
            nodes_explored: outcome.scanned,
            relaxation_bound: Some(cost + frame.fixed_cost()),
            proven_optimal: true,
            wall_time_seconds: wall,
        }),
        None => Ok(SolveReport {
            feasible: false,
            allocation: None,
            objective_cost: None,
            constraint_values: infeasibility_certificate(&rows, spec, frame),
            nodes_explored: outcome.scanned,
            relaxation_bound: None,
            proven_optimal: true,
            wall_time_seconds: wall,
        }),
    }
}

/// Evaluates every constraint of the problem at a user-supplied allocation,
/// without solving. Feasibility uses the same tolerance as the solver.
pub fn check_allocation(
    alloc: &Allocation,
    spec: &ProblemSpec,
    frame: &SurveyFrame,
) -> Result<CheckReport, SolveError> {
    let rows = build_constraints(spec, frame, false)?;
    let nf: Vec<f64> = alloc.n().iter().map(|&v| v as f64).collect();
    let mut feasible = rows.iter().all(|c| c.eval(&nf) <= bb::FEAS_TOL);
    if let Some(t) = spec.total_n {
        feasible &= alloc.total() == t;
    }
    Ok(CheckReport {
        allocation: alloc.clone(),
        objective_cost: alloc.cost(frame),
        feasible,
        constraint_values: constraint_rows_at(&rows, spec, alloc.n()),
    })
}

/// Per-characteristic deterministic constraint values
/// `Var_hat_j(n) - v0_j` (nonpositive when satisfied).
pub fn constraint_per_variable(alloc: &Allocation, frame: &SurveyFrame, v0: &[f64]) -> Vec<f64> {
    let cov = estimators::cov_hat_stratified(alloc, frame);
    (0..frame.g()).map(|j| cov.get(j, j) - v0.get(j).copied().unwrap_or(f64::INFINITY)).collect()
}

/// Trace chance constraint value
/// `E[tr] + e_p0 sqrt(Var[tr]) - tau` (nonpositive when satisfied).
/// At `p0 = 0.5` the quantile vanishes and no fourth moments are needed.
pub fn constraint_trace_chance(
    alloc: &Allocation,
    frame: &SurveyFrame,
    tau: f64,
    p0: f64,
) -> Result<f64, SolveError> {
    let e = e_quantile(p0)?;
    if e == 0.0 {
        return Ok(estimators::trace_mean(alloc, frame) - tau);
    }
    let moments = estimators::trace_moments(alloc, frame).map_err(|err| match err {
        EstimatorError::MissingFourthMoment { stratum } => {
            SolveError::MissingFourthMoment { stratum }
        }
        other => SolveError::Estimator(other),
    })?;
    if moments.var < 0.0 {
        return Err(SolveError::InvalidSpec(format!(
            "trace variance came out negative ({}); the stored fourth moments are not usable",
            moments.var
        )));
    }
    Ok(moments.mean + e * moments.var.sqrt() - tau)
}

/// `|det N(n)|^{1/4}` of the vec-coordinate asymptotic covariance at one
/// allocation; the determinant-law comparison threshold is `tau` times this.
pub fn det_scale_factor(frame: &SurveyFrame, alloc: &Allocation) -> Result<f64, SolveError> {
    let nf: Vec<f64> = alloc.n().iter().map(|&v| v as f64).collect();
    constraints::det_fourth_root(frame, &nf)
}

/// Determinant chance constraint value
/// `r_p0 - tau |det N(n)|^{1/4}` (nonpositive when satisfied); `G = 2` only.
pub fn constraint_det_chance(
    alloc: &Allocation,
    frame: &SurveyFrame,
    tau: f64,
    p0: f64,
) -> Result<f64, SolveError> {
    let row = constraints::det_chance_row(frame, tau, p0, false)?;
    let nf: Vec<f64> = alloc.n().iter().map(|&v| v as f64).collect();
    Ok(row.eval(&nf))
}

#[cfg(test)]
mod tests;
