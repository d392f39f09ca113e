//! Closed-form moments of the stratified covariance estimator.
//!
//! For an allocation `n = (n_1 .. n_H)` the estimator of the covariance of
//! the stratified mean is
//!
//! ```text
//! Cov_hat = sum_h (W_h^2 / n_h - W_h / N) s_h
//! ```
//!
//! and its half-vectorization is asymptotically normal with
//!
//! ```text
//! E(vech Cov_hat)   = sum_h (W_h^2/n_h - W_h/N) n_h/(n_h-1) vech S_h
//! Cov(vech Cov_hat) = sum_h (W_h^2/n_h - W_h/N)^2 n_h/(n_h-1)^2 (M4_h - vech S_h vech' S_h)
//! ```
//!
//! All functions take the moment matrices stored in the frame at face value;
//! whether they are pilot estimates or census values is the caller's choice.
//! The `n_h` appearing here are always the allocation decision variables,
//! never the pilot sample sizes frozen inside the stored statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcalc::{vech, vech_index, Matrix, VechVector};
use crate::strata::{RawStratumData, SurveyFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("allocation has {got} entries for {expected} strata")]
    AllocationLength { expected: usize, got: usize },
    #[error("allocation n_{} = {n} outside bounds 2..={n_pop}", stratum + 1)]
    AllocationBounds { stratum: usize, n: u64, n_pop: u64 },
    #[error("stratum {} carries no vech fourth moment matrix", stratum + 1)]
    MissingFourthMoment { stratum: usize },
    #[error("stratum {} carries no vec fourth moment matrix", stratum + 1)]
    MissingVecFourthMoment { stratum: usize },
    #[error("sample sizes list has {got} entries for {expected} strata")]
    SampleSizesLength { expected: usize, got: usize },
    #[error("sample size {n} exceeds population {n_pop} in stratum {}", stratum + 1)]
    SampleSizeBounds { stratum: usize, n: usize, n_pop: usize },
}

/// Integer sample sizes per stratum, validated against a frame:
/// `2 <= n_h <= N_h` for every `h`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation {
    n: Vec<u64>,
}

impl Allocation {
    pub fn new(n: Vec<u64>, frame: &SurveyFrame) -> Result<Self, EstimatorError> {
        if n.len() != frame.len() {
            return Err(EstimatorError::AllocationLength { expected: frame.len(), got: n.len() });
        }
        for (h, (&nh, stratum)) in n.iter().zip(frame.strata()).enumerate() {
            if nh < 2 || nh > stratum.population_size {
                return Err(EstimatorError::AllocationBounds {
                    stratum: h,
                    n: nh,
                    n_pop: stratum.population_size,
                });
            }
        }
        Ok(Self { n })
    }

    /// The census allocation `n_h = N_h`.
    pub fn census(frame: &SurveyFrame) -> Self {
        Self { n: frame.strata().iter().map(|s| s.population_size).collect() }
    }

    pub fn n(&self) -> &[u64] {
        &self.n
    }

    pub fn get(&self, h: usize) -> u64 {
        self.n[h]
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// Total sample size.
    pub fn total(&self) -> u64 {
        self.n.iter().sum()
    }

    /// Linear sampling cost `c'n + c_0`.
    pub fn cost(&self, frame: &SurveyFrame) -> f64 {
        self.n
            .iter()
            .zip(frame.strata())
            .map(|(&nh, s)| s.unit_cost * nh as f64)
            .sum::<f64>()
            + frame.fixed_cost()
    }
}

/// Per-stratum variance coefficient `W_h^2 / n_h - W_h / N`.
///
/// Nonnegative for every valid allocation: it vanishes exactly when
/// `n_h = N_h` (the finite population correction swallows the whole term).
///
/// # Panics
/// Panics when `h` is out of range or the allocation length does not match
/// the frame.
pub fn weight(h: usize, alloc: &Allocation, frame: &SurveyFrame) -> f64 {
    assert!(h < frame.len(), "stratum index {h} out of range for {} strata", frame.len());
    assert_eq!(alloc.len(), frame.len(), "allocation does not match frame");
    let w = frame.relative_size(h);
    let value = w * w / alloc.get(h) as f64 - w / frame.total_population() as f64;
    debug_assert!(value >= -1e-15, "variance coefficient went negative: {value}");
    value
}

/// The estimator `Cov_hat` of the covariance matrix of the stratified mean:
/// `sum_h weight(h) s_h`, a symmetric `G x G` matrix.
pub fn cov_hat_stratified(alloc: &Allocation, frame: &SurveyFrame) -> Matrix {
    let g = frame.g();
    let mut out = Matrix::zeros(g, g);
    for h in 0..frame.len() {
        out.add_scaled(weight(h, alloc, frame), &frame.stratum(h).covariance).expect("shape");
    }
    out
}

/// Mean of `vech Cov_hat`: `sum_h weight(h) n_h/(n_h-1) vech s_h`.
pub fn vech_mean(alloc: &Allocation, frame: &SurveyFrame) -> VechVector {
    let g = frame.g();
    let mut out = VechVector::zeros(g);
    for h in 0..frame.len() {
        let nh = alloc.get(h) as f64;
        let coeff = weight(h, alloc, frame) * nh / (nh - 1.0);
        let vs = vech(&frame.stratum(h).covariance).expect("covariance is square");
        for (o, v) in out.data_mut().iter_mut().zip(vs.data()) {
            *o += coeff * v;
        }
    }
    out
}

/// Covariance of `vech Cov_hat`:
/// `sum_h weight(h)^2 n_h/(n_h-1)^2 (M4_h - vech s_h vech' s_h)`.
///
/// Every stratum must carry a vech fourth moment matrix.
pub fn vech_cov(alloc: &Allocation, frame: &SurveyFrame) -> Result<Matrix, EstimatorError> {
    let k = crate::matcalc::vech_len(frame.g());
    let mut out = Matrix::zeros(k, k);
    for h in 0..frame.len() {
        let stratum = frame.stratum(h);
        let m4 = stratum
            .fourth_moment_vech
            .as_ref()
            .ok_or(EstimatorError::MissingFourthMoment { stratum: h })?;
        let nh = alloc.get(h) as f64;
        let w = weight(h, alloc, frame);
        let coeff = w * w * nh / ((nh - 1.0) * (nh - 1.0));
        let vs = vech(&stratum.covariance).expect("covariance is square");
        for i in 0..k {
            for j in 0..k {
                let term = m4.get(i, j) - vs.data()[i] * vs.data()[j];
                out.set(i, j, out.get(i, j) + coeff * term);
            }
        }
    }
    Ok(out)
}

/// Mean and variance of the trace of `Cov_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceMoments {
    pub mean: f64,
    pub var: f64,
}

/// Mean of `tr Cov_hat`: `sum_j sum_h weight(h) n_h/(n_h-1) s_hj^2`.
///
/// Needs only the covariance diagonals, so it works without fourth moments.
pub fn trace_mean(alloc: &Allocation, frame: &SurveyFrame) -> f64 {
    let g = frame.g();
    let mut total = 0.0;
    for h in 0..frame.len() {
        let nh = alloc.get(h) as f64;
        let coeff = weight(h, alloc, frame) * nh / (nh - 1.0);
        let s = &frame.stratum(h).covariance;
        for j in 0..g {
            total += coeff * s.get(j, j);
        }
    }
    total
}

/// Mean and variance of `tr Cov_hat`:
///
/// ```text
/// var = sum_j sum_h weight(h)^2 n_h/(n_h-1)^2 (m4_hj - (s_hj^2)^2)
/// ```
///
/// where `m4_hj` is the diagonal fourth moment of characteristic `j`, read
/// from the `(jj, jj)` entry of the stored vech fourth moment matrix.
pub fn trace_moments(
    alloc: &Allocation,
    frame: &SurveyFrame,
) -> Result<TraceMoments, EstimatorError> {
    let g = frame.g();
    let mut var = 0.0;
    for h in 0..frame.len() {
        let stratum = frame.stratum(h);
        let m4 = stratum
            .fourth_moment_vech
            .as_ref()
            .ok_or(EstimatorError::MissingFourthMoment { stratum: h })?;
        let nh = alloc.get(h) as f64;
        let w = weight(h, alloc, frame);
        let coeff = w * w * nh / ((nh - 1.0) * (nh - 1.0));
        for j in 0..g {
            let idx = vech_index(g, j, j);
            let s2 = stratum.covariance.get(j, j);
            var += coeff * (m4.get(idx, idx) - s2 * s2);
        }
    }
    Ok(TraceMoments { mean: trace_mean(alloc, frame), var })
}

/// The moment summary every front end prints: the covariance estimate of the
/// stratified mean plus the mean/covariance of its half-vectorization. The
/// fourth-moment-dependent pieces are absent when the frame does not carry
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub cov_hat: Matrix,
    pub mean_vech: VechVector,
    pub cov_vech: Option<Matrix>,
    pub trace_mean: f64,
    pub trace_var: Option<f64>,
}

pub fn moment_report(alloc: &Allocation, frame: &SurveyFrame) -> MomentReport {
    let cov_vech = vech_cov(alloc, frame).ok();
    let trace_var = trace_moments(alloc, frame).ok().map(|t| t.var);
    MomentReport {
        cov_hat: cov_hat_stratified(alloc, frame),
        mean_vech: vech_mean(alloc, frame),
        cov_vech,
        trace_mean: trace_mean(alloc, frame),
        trace_var,
    }
}

/// Finite-population diagnostic for the normal-approximation condition, per
/// stratum and characteristic:
///
/// ```text
/// max over n-subsets of sum_beta [(y_beta - Ybar)^2 - S^2]^2
/// -----------------------------------------------------------
///              N [m^4 - (S^2)^2]
/// ```
///
/// The numerator's max over subsets of a sum of fixed nonnegative terms is
/// attained by taking the `n` largest terms, so the greedy evaluation is
/// exact, not a bound. A small value supports the normal approximation; a
/// degenerate denominator (constant squared deviations) reports infinity.
pub fn hajek_diagnostic(
    populations: &[RawStratumData],
    sample_sizes: &[usize],
) -> Result<Vec<Vec<f64>>, EstimatorError> {
    if populations.len() != sample_sizes.len() {
        return Err(EstimatorError::SampleSizesLength {
            expected: populations.len(),
            got: sample_sizes.len(),
        });
    }
    let mut out = Vec::with_capacity(populations.len());
    for (h, (pop, &n)) in populations.iter().zip(sample_sizes).enumerate() {
        let big_n = pop.n();
        if n > big_n {
            return Err(EstimatorError::SampleSizeBounds { stratum: h, n, n_pop: big_n });
        }
        let g = pop.g();
        let mean = pop.mean();
        let mut per_char = Vec::with_capacity(g);
        for j in 0..g {
            let devs2: Vec<f64> = (0..big_n)
                .map(|i| {
                    let d = pop.observations().get(i, j) - mean[j];
                    d * d
                })
                .collect();
            let s2 = devs2.iter().sum::<f64>() / big_n as f64;
            let m4 = devs2.iter().map(|d| d * d).sum::<f64>() / big_n as f64;
            let denom = big_n as f64 * (m4 - s2 * s2);
            if denom <= f64::EPSILON * big_n as f64 * m4.max(1.0) {
                per_char.push(f64::INFINITY);
                continue;
            }
            let mut terms: Vec<f64> = devs2.iter().map(|d| (d - s2) * (d - s2)).collect();
            terms.sort_by(|a, b| b.total_cmp(a));
            let numer: f64 = terms[..n].iter().sum();
            per_char.push(numer / denom);
        }
        out.push(per_char);
    }
    Ok(out)
}
