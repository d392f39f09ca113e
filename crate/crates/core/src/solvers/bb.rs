//! Best-bound branch and bound over integer allocation boxes.
//!
//! Nodes are boxes `[lo, hi]`; each one is pruned by corner feasibility
//! (every constraint knows a valid lower bound of itself over a box) and
//! bounded by the Lagrangian dual. Branching splits the most fractional
//! coordinate of the dual's inner minimizer, falling back to the coordinate
//! with the largest variance sensitivity. The search is single-threaded and
//! fully deterministic: ties in the best-bound queue break by node id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::constraints::Constraint;
use super::relax::dual_bound;

pub(crate) const FEAS_TOL: f64 = 1e-7;
pub(crate) const INT_TOL: f64 = 1e-6;
const BOUND_MARGIN: f64 = 1e-9;

#[derive(Debug)]
struct Node {
    lo: Vec<u64>,
    hi: Vec<u64>,
    bound: f64,
    point: Vec<f64>,
    id: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; invert so the smallest bound pops first,
    // oldest node first on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

#[derive(Debug)]
pub(crate) struct BbOutcome {
    /// Best integer-feasible allocation and its linear cost `c'n`.
    pub best: Option<(Vec<u64>, f64)>,
    pub nodes_explored: u64,
    /// Dual bound of the root box (`None` when the root is already pruned).
    pub root_bound: Option<f64>,
    /// False only when the node cap was hit before the proof closed.
    pub proven: bool,
}

pub(crate) struct BbProblem<'a> {
    pub costs: &'a [f64],
    pub lo: &'a [u64],
    pub hi: &'a [u64],
    pub constraints: &'a [Constraint],
    pub total_n: Option<u64>,
    /// Per-stratum variance sensitivity used for branching tie-breaks.
    pub sensitivity: &'a [f64],
    pub node_cap: u64,
}

/// Largest dyadic step that divides every cost exactly, or zero when the
/// costs live on no such lattice. Integer allocations then have objectives
/// on the `delta` grid, which lets dual bounds round up to the next grid
/// point.
pub(crate) fn cost_lattice(costs: &[f64]) -> f64 {
    let mut delta = 16.0f64;
    loop {
        if delta < 1e-6 {
            return 0.0;
        }
        let on_grid = costs.iter().all(|c| {
            let q = c / delta;
            (q - q.round()).abs() <= 1e-9 * q.abs().max(1.0)
        });
        if on_grid {
            return delta;
        }
        delta *= 0.5;
    }
}

fn lift_to_lattice(bound: f64, delta: f64) -> f64 {
    if delta <= 0.0 || !bound.is_finite() {
        return bound;
    }
    ((bound - 1e-9) / delta).ceil() * delta
}

pub(crate) fn branch_and_bound(problem: &BbProblem) -> BbOutcome {
    let delta = cost_lattice(problem.costs);
    let mut next_id = 0u64;
    let mut nodes_explored = 0u64;
    let mut incumbent: Option<(Vec<u64>, f64)> = None;
    let mut heap = BinaryHeap::new();

    let make_node = |lo: Vec<u64>, hi: Vec<u64>, next_id: &mut u64| -> Option<Node> {
        debug_assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b));
        if let Some(t) = problem.total_n {
            let sum_lo: u64 = lo.iter().sum();
            let sum_hi: u64 = hi.iter().sum();
            if t < sum_lo || t > sum_hi {
                return None;
            }
        }
        let lo_f: Vec<f64> = lo.iter().map(|&v| v as f64).collect();
        let hi_f: Vec<f64> = hi.iter().map(|&v| v as f64).collect();
        for c in problem.constraints {
            if c.min_over_box(&lo_f, &hi_f) > FEAS_TOL {
                return None;
            }
        }
        let dual = dual_bound(
            problem.costs,
            &lo_f,
            &hi_f,
            problem.constraints,
            problem.total_n.map(|t| t as f64),
        );
        let id = *next_id;
        *next_id += 1;
        Some(Node { lo, hi, bound: lift_to_lattice(dual.bound, delta), point: dual.point, id })
    };

    let root = make_node(problem.lo.to_vec(), problem.hi.to_vec(), &mut next_id);
    let root_bound = root.as_ref().map(|n| n.bound);
    if let Some(root) = root {
        heap.push(root);
    } else {
        return BbOutcome { best: None, nodes_explored: 0, root_bound: None, proven: true };
    }

    let cost_of = |n: &[u64]| -> f64 {
        n.iter().zip(problem.costs).map(|(&v, c)| c * v as f64).sum()
    };
    let feasible_at = |n: &[u64]| -> bool {
        if let Some(t) = problem.total_n {
            if n.iter().sum::<u64>() != t {
                return false;
            }
        }
        let nf: Vec<f64> = n.iter().map(|&v| v as f64).collect();
        problem.constraints.iter().all(|c| c.eval(&nf) <= FEAS_TOL)
    };

    let mut proven = true;

    while let Some(node) = heap.pop() {
        if let Some((_, inc_cost)) = &incumbent {
            if node.bound >= inc_cost - BOUND_MARGIN {
                // Best-bound order: nothing left can beat the incumbent.
                heap.clear();
                break;
            }
        }
        nodes_explored += 1;
        if nodes_explored > problem.node_cap {
            proven = false;
            break;
        }

        if node.lo == node.hi {
            try_update(&mut incumbent, &node.lo, &feasible_at, &cost_of);
            continue;
        }

        for cand in candidates(&node, problem) {
            try_update(&mut incumbent, &cand, &feasible_at, &cost_of);
        }

        let dim = branch_dimension(&node, problem.sensitivity);
        let split = (node.point[dim].floor() as u64).clamp(node.lo[dim], node.hi[dim] - 1);
        let mut left_hi = node.hi.clone();
        left_hi[dim] = split;
        let mut right_lo = node.lo.clone();
        right_lo[dim] = split + 1;
        if let Some(child) = make_node(node.lo.clone(), left_hi, &mut next_id) {
            heap.push(child);
        }
        if let Some(child) = make_node(right_lo, node.hi.clone(), &mut next_id) {
            heap.push(child);
        }
    }

    BbOutcome { best: incumbent, nodes_explored, root_bound, proven }
}

fn try_update(
    incumbent: &mut Option<(Vec<u64>, f64)>,
    n: &[u64],
    feasible_at: &impl Fn(&[u64]) -> bool,
    cost_of: &impl Fn(&[u64]) -> f64,
) {
    if !feasible_at(n) {
        return;
    }
    let cost = cost_of(n);
    match incumbent {
        Some((best_n, best_cost)) => {
            if cost < *best_cost || (cost == *best_cost && n < best_n.as_slice()) {
                *incumbent = Some((n.to_vec(), cost));
            }
        }
        None => *incumbent = Some((n.to_vec(), cost)),
    }
}

/// Integer candidate points around the relaxation minimizer. Rounding up
/// favors feasibility (every constraint relaxes as coordinates grow), and
/// the top corner is the most-feasible fallback; with a total-size equality
/// each candidate is repaired onto the simplex first.
fn candidates(node: &Node, problem: &BbProblem) -> Vec<Vec<u64>> {
    let clampv = |v: f64, h: usize| -> u64 {
        (v.max(0.0) as u64).clamp(node.lo[h], node.hi[h])
    };
    let mut cands: Vec<Vec<u64>> = Vec::with_capacity(4);
    cands.push(node.point.iter().enumerate().map(|(h, &x)| clampv(x.ceil(), h)).collect());
    cands.push(node.point.iter().enumerate().map(|(h, &x)| clampv(x.round(), h)).collect());
    cands.push(node.hi.clone());
    if let Some(t) = problem.total_n {
        for cand in &mut cands {
            repair_total(cand, &node.lo, &node.hi, t, problem.costs);
        }
    }
    cands
}

/// Adjusts `n` toward `sum n_h = t` by growing the cheapest coordinates and
/// shrinking the most expensive ones, within the box.
fn repair_total(n: &mut [u64], lo: &[u64], hi: &[u64], t: u64, costs: &[f64]) {
    let mut total: u64 = n.iter().sum();
    let mut guard = 0u64;
    while total != t {
        guard += 1;
        if guard > 10_000_000 {
            return;
        }
        if total < t {
            let mut pick = None;
            for h in 0..n.len() {
                if n[h] < hi[h] {
                    let better = match pick {
                        None => true,
                        Some(p) => costs[h] < costs[p],
                    };
                    if better {
                        pick = Some(h);
                    }
                }
            }
            match pick {
                Some(h) => {
                    let room = (hi[h] - n[h]).min(t - total);
                    n[h] += room;
                    total += room;
                }
                None => return,
            }
        } else {
            let mut pick = None;
            for h in 0..n.len() {
                if n[h] > lo[h] {
                    let better = match pick {
                        None => true,
                        Some(p) => costs[h] > costs[p],
                    };
                    if better {
                        pick = Some(h);
                    }
                }
            }
            match pick {
                Some(h) => {
                    let room = (n[h] - lo[h]).min(total - t);
                    n[h] -= room;
                    total -= room;
                }
                None => return,
            }
        }
    }
}

/// Most fractional coordinate of the relaxation point, tie-broken (and
/// backed up, when the point is integral) by the largest variance
/// sensitivity `W_h^2 s_max / n_h^2`.
fn branch_dimension(node: &Node, sensitivity: &[f64]) -> usize {
    let open = |h: usize| node.lo[h] < node.hi[h];
    let mut best: Option<(usize, f64)> = None;
    for h in 0..node.point.len() {
        if !open(h) {
            continue;
        }
        let x = node.point[h];
        let frac = (x - x.round()).abs();
        if frac > INT_TOL {
            let better = match best {
                None => true,
                Some((_, f)) => frac > f,
            };
            if better {
                best = Some((h, frac));
            }
        }
    }
    if let Some((h, _)) = best {
        return h;
    }
    // Integral relaxation point: branch where the variance is most
    // sensitive to the allocation.
    let mut pick = 0;
    let mut score = f64::NEG_INFINITY;
    for h in 0..node.point.len() {
        if !open(h) {
            continue;
        }
        let s = sensitivity[h] / (node.point[h] * node.point[h]).max(1.0);
        if s > score {
            score = s;
            pick = h;
        }
    }
    pick
}
