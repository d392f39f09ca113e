//! Lagrangian dual bound over a box of allocations.
//!
//! For multipliers `gam >= 0` on the (separably underestimated) constraints
//! and a free multiplier `nu` on the optional total-size equality, the inner
//! problem decomposes per stratum into
//!
//! ```text
//! min over t in [lo_h, hi_h] of (c_h + nu) t + A_h / t + B_h / (t - 1)
//! ```
//!
//! with `A_h, B_h >= 0`, a convex one-dimensional problem with closed-form
//! stationary points when only one of `A_h`, `B_h` is active and a monotone
//! derivative bisection otherwise. Every multiplier vector yields a valid
//! lower bound by weak duality; the search only has to find good ones, and
//! maximizes coordinatewise with golden-section line searches.

use super::constraints::{var_base, var_base_deriv, Constraint, DualPieces, VarParams};

/// Result of the dual bound at one node.
#[derive(Debug, Clone)]
pub(crate) struct DualBound {
    /// Valid lower bound on `c'n` over the box intersected with the relaxed
    /// feasible set.
    pub bound: f64,
    /// Inner minimizer at the best multipliers; used for branching and as an
    /// incumbent seed.
    pub point: Vec<f64>,
}

/// Minimizes `b t + A/t + B/(t-1) + C var_base(t)` over `[lo, hi]` (with
/// `lo >= 2`), returning a rigorous lower bound on the minimum and the
/// minimizer. All of `A`, `B`, `C` are nonnegative and every term besides
/// `b t` is convex decreasing, so the derivative is monotone.
#[allow(clippy::too_many_arguments)]
fn inner_min_1d(
    b: f64,
    a: f64,
    bb: f64,
    c: f64,
    w: f64,
    inv_n_total: f64,
    lo: f64,
    hi: f64,
) -> (f64, f64) {
    debug_assert!(a >= 0.0 && bb >= 0.0 && c >= 0.0 && lo >= 2.0 && hi >= lo);
    let phi = |t: f64| {
        b * t
            + a / t
            + bb / (t - 1.0)
            + if c > 0.0 { c * var_base(w, inv_n_total, t) } else { 0.0 }
    };
    let dphi = |t: f64| {
        b - a / (t * t) - bb / ((t - 1.0) * (t - 1.0))
            + if c > 0.0 { c * var_base_deriv(w, inv_n_total, t) } else { 0.0 }
    };

    if lo == hi {
        return (phi(lo), lo);
    }
    // Nonpositive linear coefficient makes the whole function decreasing.
    if b <= 0.0 {
        return (phi(hi), hi);
    }
    let t_star = if a > 0.0 && bb == 0.0 && c == 0.0 {
        (a / b).sqrt()
    } else if bb > 0.0 && a == 0.0 && c == 0.0 {
        1.0 + (bb / b).sqrt()
    } else if a == 0.0 && bb == 0.0 && c == 0.0 {
        lo
    } else {
        // Mixed terms: bisect the monotone derivative.
        let (mut t1, mut t2) = (lo, hi);
        if dphi(t1) >= 0.0 {
            t2 = lo;
        } else if dphi(t2) <= 0.0 {
            t1 = hi;
        } else {
            for _ in 0..80 {
                let mid = 0.5 * (t1 + t2);
                if dphi(mid) < 0.0 {
                    t1 = mid;
                } else {
                    t2 = mid;
                }
                if t2 - t1 <= 1e-12 * t2 {
                    break;
                }
            }
        }
        0.5 * (t1 + t2)
    };
    let t_hat = t_star.clamp(lo, hi);
    // First-order certificate: for convex phi,
    // min >= phi(t) + min_{s in [lo,hi]} phi'(t) (s - t).
    let g = dphi(t_hat);
    let correction = (g * (lo - t_hat)).min(g * (hi - t_hat)).min(0.0);
    (phi(t_hat) + correction, t_hat)
}

/// Evaluates the dual function at one multiplier vector, returning the bound
/// and the inner minimizer.
fn dual_value(
    costs: &[f64],
    lo: &[f64],
    hi: &[f64],
    pieces: &[DualPieces],
    gammas: &[f64],
    total_n: Option<f64>,
    nu: f64,
) -> (f64, Vec<f64>) {
    let h_count = costs.len();
    let var_params: Option<&VarParams> =
        pieces.iter().find_map(|p| p.var_params.as_ref());
    let mut value = 0.0;
    let mut point = vec![0.0; h_count];
    for h in 0..h_count {
        let mut a = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for (piece, &g) in pieces.iter().zip(gammas) {
            a += g * piece.inv_t[h];
            b += g * piece.inv_tm1[h];
            c += g * piece.var_q[h];
        }
        let (w, inv_n) = match var_params {
            Some(p) => (p.w[h], p.inv_n_total),
            None => (0.0, 0.0),
        };
        let (v, t) = inner_min_1d(costs[h] + nu, a, b, c, w, inv_n, lo[h], hi[h]);
        value += v;
        point[h] = t;
    }
    for (piece, &g) in pieces.iter().zip(gammas) {
        value += g * piece.constant;
    }
    if let Some(t) = total_n {
        value -= nu * t;
    }
    (value, point)
}

/// Maximizes a concave 1-D function by doubling-step bracketing plus
/// golden-section refinement, returning the best argument actually
/// evaluated (so floating-point bumps in `f` can only help, never hurt).
fn line_max(mut f: impl FnMut(f64) -> f64, start: f64, lo_cap: f64, hi_cap: f64) -> f64 {
    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    let start = start.clamp(lo_cap, hi_cap);
    let mut best_x = start;
    let mut best_f = f(start);
    let mut probe = |x: f64, best_x: &mut f64, best_f: &mut f64| -> f64 {
        let v = f(x);
        if v > *best_f {
            *best_f = v;
            *best_x = x;
        }
        v
    };

    // Bracket the maximum: march away from the start with doubling steps
    // until the function stops improving (the last candidate then lies past
    // the peak), in each direction.
    let mut b = start;
    let mut fb = best_f;
    let mut step = 1.0f64.max(start.abs() * 0.5);
    for _ in 0..80 {
        if b >= hi_cap {
            break;
        }
        let cand = (b + step).min(hi_cap);
        let fc = probe(cand, &mut best_x, &mut best_f);
        b = cand;
        if fc <= fb {
            break;
        }
        fb = fc;
        step *= 2.0;
    }
    let mut a = start;
    let mut fa = probe(start, &mut best_x, &mut best_f);
    step = 1.0f64.max(start.abs() * 0.5);
    for _ in 0..80 {
        if a <= lo_cap {
            break;
        }
        let cand = (a - step).max(lo_cap);
        let fc = probe(cand, &mut best_x, &mut best_f);
        a = cand;
        if fc <= fa {
            break;
        }
        fa = fc;
        step *= 2.0;
    }

    // Golden-section refinement on the bracket.
    if b > a {
        let mut x1 = b - GOLDEN * (b - a);
        let mut x2 = a + GOLDEN * (b - a);
        let mut f1 = probe(x1, &mut best_x, &mut best_f);
        let mut f2 = probe(x2, &mut best_x, &mut best_f);
        for _ in 0..64 {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (b - a);
                f2 = probe(x2, &mut best_x, &mut best_f);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - GOLDEN * (b - a);
                f1 = probe(x1, &mut best_x, &mut best_f);
            }
            if (b - a).abs() <= 1e-10 * (1.0 + a.abs() + b.abs()) {
                break;
            }
        }
    }
    best_x
}

/// Computes the Lagrangian dual bound over the box, coordinate-ascending the
/// multipliers. `constraints` may include rows without separable pieces
/// (they are skipped here and enforced through box feasibility pruning).
pub(crate) fn dual_bound(
    costs: &[f64],
    lo: &[f64],
    hi: &[f64],
    constraints: &[Constraint],
    total_n: Option<f64>,
) -> DualBound {
    let pieces: Vec<DualPieces> =
        constraints.iter().filter_map(|c| c.dual_pieces(lo, hi)).collect();
    let m = pieces.len();
    let mut gammas = vec![0.0; m];
    let mut nu = 0.0;

    let (mut best_value, mut best_point) =
        dual_value(costs, lo, hi, &pieces, &gammas, total_n, nu);

    let sweeps = if m == 0 && total_n.is_none() { 0 } else { 3 };
    for _ in 0..sweeps {
        for i in 0..m {
            let gi = line_max(
                |g| {
                    let mut trial = gammas.clone();
                    trial[i] = g;
                    dual_value(costs, lo, hi, &pieces, &trial, total_n, nu).0
                },
                gammas[i],
                0.0,
                1e18,
            );
            gammas[i] = gi;
        }
        if total_n.is_some() {
            nu = line_max(
                |v| dual_value(costs, lo, hi, &pieces, &gammas, total_n, v).0,
                nu,
                -1e12,
                1e12,
            );
        }
        let (value, point) = dual_value(costs, lo, hi, &pieces, &gammas, total_n, nu);
        if value > best_value {
            best_value = value;
            best_point = point;
        }
    }
    DualBound { bound: best_value, point: best_point }
}
