//! Exhaustive-scan reference optimizer for small integer boxes.

use super::bb::FEAS_TOL;
use super::constraints::Constraint;
use super::SolveError;
use crate::strata::SurveyFrame;

const MAX_POINTS: f64 = 1_000_000.0;

pub(crate) struct ScanOutcome {
    /// Optimal allocation and its linear cost `c'n`; lexicographically
    /// smallest among cost ties.
    pub best: Option<(Vec<u64>, f64)>,
    pub scanned: u64,
}

pub(crate) fn scan(
    frame: &SurveyFrame,
    rows: &[Constraint],
    total_n: Option<u64>,
) -> Result<ScanOutcome, SolveError> {
    let h_count = frame.len();
    let lo: Vec<u64> = vec![2; h_count];
    let hi: Vec<u64> = frame.strata().iter().map(|s| s.population_size).collect();
    let costs: Vec<f64> = frame.strata().iter().map(|s| s.unit_cost).collect();

    let points = hi.iter().zip(&lo).map(|(&h, &l)| (h - l + 1) as f64).product::<f64>();
    if points > MAX_POINTS {
        return Err(SolveError::BoxTooLarge { points });
    }

    let mut n = lo.clone();
    let mut nf: Vec<f64> = n.iter().map(|&v| v as f64).collect();
    let mut best: Option<(Vec<u64>, f64)> = None;
    let mut scanned = 0u64;
    loop {
        scanned += 1;
        let total_ok = match total_n {
            Some(t) => n.iter().sum::<u64>() == t,
            None => true,
        };
        if total_ok && rows.iter().all(|c| c.eval(&nf) <= FEAS_TOL) {
            let cost: f64 = n.iter().zip(&costs).map(|(&v, c)| c * v as f64).sum();
            let better = match &best {
                None => true,
                Some((bn, bc)) => cost < *bc || (cost == *bc && n.as_slice() < bn.as_slice()),
            };
            if better {
                best = Some((n.clone(), cost));
            }
        }
        // Odometer increment over the box.
        let mut dim = 0;
        loop {
            if dim == h_count {
                return Ok(ScanOutcome { best, scanned });
            }
            if n[dim] < hi[dim] {
                n[dim] += 1;
                nf[dim] = n[dim] as f64;
                break;
            }
            n[dim] = lo[dim];
            nf[dim] = n[dim] as f64;
            dim += 1;
        }
    }
}
