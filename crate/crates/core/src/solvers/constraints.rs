//! Constraint functions of the allocation programs, in a form the bounding
//! machinery can exploit.
//!
//! Every constraint evaluates to `g(n) <= 0` when satisfied. The plain
//! variance constraints are separable sums of `a_h / n_h`; the
//! mean-adjusted (chance) constraints add `alpha_h / (n_h - 1)` terms and an
//! `e * sqrt(var(n))` correction; the determinant constraint compares
//! `tau |N(n)|^{1/4}` against a percentile of the determinant law. All of
//! them are coordinate-monotone, which gives exact feasibility bounds on a
//! box from a single corner evaluation.

use serde::{Deserialize, Serialize};

use crate::matcalc::{vec_of, vech_index, Matrix};
use crate::strata::SurveyFrame;

use super::SolveError;

/// Direction of the reported inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    LessEq,
    GreaterEq,
    Eq,
}

/// One evaluated constraint row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub sense: Sense,
    /// Nonnegative when satisfied: `bound - value` for `<=` rows,
    /// `value - bound` for `>=` rows.
    pub slack: f64,
}

/// Variance coefficients of the `e * sqrt(var)` term:
/// `var_h(t) = (w_h^2/t - w_h/N)^2 * t/(t-1)^2 * q_h`.
#[derive(Debug, Clone)]
pub(crate) struct VarCoeffs {
    pub w: Vec<f64>,
    pub inv_n_total: f64,
    pub q: Vec<f64>,
}

impl VarCoeffs {
    pub fn value(&self, n: &[f64]) -> f64 {
        let mut total = 0.0;
        for (h, &t) in n.iter().enumerate() {
            total += var_base(self.w[h], self.inv_n_total, t) * self.q[h];
        }
        total
    }
}

/// Per-stratum variance kernel `(w^2/t - w/N)^2 t/(t-1)^2`: positive,
/// decreasing and convex on `t >= 2` up to the census point.
#[inline]
pub(crate) fn var_base(w: f64, inv_n_total: f64, t: f64) -> f64 {
    let u = w * w / t - w * inv_n_total;
    u * u * t / ((t - 1.0) * (t - 1.0))
}

/// Derivative of [`var_base`] in `t`.
#[inline]
pub(crate) fn var_base_deriv(w: f64, inv_n_total: f64, t: f64) -> f64 {
    let u = w * w / t - w * inv_n_total;
    let du = -w * w / (t * t);
    let v = t / ((t - 1.0) * (t - 1.0));
    let dv = -(t + 1.0) / ((t - 1.0) * (t - 1.0) * (t - 1.0));
    2.0 * u * du * v + u * u * dv
}

#[derive(Debug, Clone)]
pub(crate) enum Kind {
    /// `sum_h a_h / n_h + base <= bound`.
    PlainVariance { a: Vec<f64>, base: f64 },
    /// `sum_h alpha_h / (n_h - 1) + base + e * sqrt(var(n)) <= bound`.
    Chance { alpha: Vec<f64>, base: f64, e: f64, var: Option<VarCoeffs> },
    /// `r_p0 - tau * |det N(n)|^{1/4} <= 0` with
    /// `N(n) = sum_h (w^2/n - w/N)^2 n/(n-1)^2 T_h`.
    Determinant { terms: Vec<Matrix>, w: Vec<f64>, inv_n_total: f64, r: f64, tau: f64 },
}

/// Separable convex underestimate of a constraint over a box, used by the
/// Lagrangian bound:
///
/// ```text
/// g(n) >= sum_h [ inv_t_h/n_h + inv_tm1_h/(n_h-1) + var_q_h var_base(n_h) ] + constant
/// ```
///
/// The `var_q` terms come from the chord underestimate of the concave
/// square root over the box's variance range.
#[derive(Debug, Clone)]
pub(crate) struct DualPieces {
    pub inv_t: Vec<f64>,
    pub inv_tm1: Vec<f64>,
    pub var_q: Vec<f64>,
    /// Frame weights backing the `var_base` kernel; present iff some
    /// `var_q` entry is nonzero.
    pub var_params: Option<VarParams>,
    pub constant: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct VarParams {
    pub w: Vec<f64>,
    pub inv_n_total: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub name: String,
    pub kind: Kind,
    /// Right-hand side in g-form (`g = value - bound <= 0`); the determinant
    /// constraint keeps its bound inside `kind`.
    pub bound: f64,
}

impl Constraint {
    /// Constraint value in `<= 0` form at a (possibly fractional) point.
    pub fn eval(&self, n: &[f64]) -> f64 {
        match &self.kind {
            Kind::PlainVariance { a, base } => {
                let mut v = *base;
                for (ah, t) in a.iter().zip(n) {
                    v += ah / t;
                }
                v - self.bound
            }
            Kind::Chance { alpha, base, e, var } => {
                let mut mean = *base;
                for (al, t) in alpha.iter().zip(n) {
                    mean += al / (t - 1.0);
                }
                let spread = match var {
                    Some(v) => e * v.value(n).max(0.0).sqrt(),
                    None => 0.0,
                };
                mean + spread - self.bound
            }
            Kind::Determinant { terms, w, inv_n_total, r, tau } => {
                let g2 = terms[0].rows();
                let mut big_n = Matrix::zeros(g2, g2);
                for (h, &t) in n.iter().enumerate() {
                    let wh = w[h];
                    let coeff = wh * wh / t - wh * inv_n_total;
                    let scale = coeff * coeff * t / ((t - 1.0) * (t - 1.0));
                    big_n.add_scaled(scale, &terms[h]).expect("shape");
                }
                let det = big_n.det().expect("square").max(0.0);
                r - tau * det.powf(0.25)
            }
        }
    }

    /// A valid lower bound of `g` over the box `[lo, hi]`, from corner
    /// monotonicity: the plain and mean parts decrease in every coordinate,
    /// the variance part decreases (so `e * sqrt(var)` needs the opposite
    /// corner when `e < 0`), and the determinant constraint increases.
    pub fn min_over_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        match &self.kind {
            Kind::PlainVariance { .. } => self.eval(hi),
            Kind::Chance { alpha, base, e, var } => {
                let mut mean = *base;
                for (al, t) in alpha.iter().zip(hi) {
                    mean += al / (t - 1.0);
                }
                let spread = match var {
                    Some(v) => {
                        let corner = if *e >= 0.0 { hi } else { lo };
                        e * v.value(corner).max(0.0).sqrt()
                    }
                    None => 0.0,
                };
                mean + spread - self.bound
            }
            Kind::Determinant { .. } => self.eval(lo),
        }
    }

    /// Separable Lagrangian pieces; `None` for the determinant constraint,
    /// which only participates through feasibility pruning.
    pub fn dual_pieces(&self, lo: &[f64], hi: &[f64]) -> Option<DualPieces> {
        let h_count = lo.len();
        match &self.kind {
            Kind::PlainVariance { a, base } => Some(DualPieces {
                inv_t: a.clone(),
                inv_tm1: vec![0.0; h_count],
                var_q: vec![0.0; h_count],
                var_params: None,
                constant: base - self.bound,
            }),
            Kind::Chance { alpha, base, e, var } => {
                let mut var_q = vec![0.0; h_count];
                let mut var_params = None;
                let mut spread = 0.0;
                if let Some(v) = var {
                    if *e >= 0.0 {
                        // var(n) ranges over [var(hi), var(lo)] on the box;
                        // sqrt is concave, so its chord there sits below it:
                        // e sqrt(var) >= e (alpha0 + beta var(n)).
                        let m = v.value(hi).max(0.0);
                        let big_m = v.value(lo).max(0.0);
                        if big_m - m > 1e-14 * big_m.max(1.0) {
                            let beta = (big_m.sqrt() - m.sqrt()) / (big_m - m);
                            spread = e * (m.sqrt() - beta * m);
                            for h in 0..h_count {
                                var_q[h] = e * beta * v.q[h];
                            }
                            var_params = Some(VarParams {
                                w: v.w.clone(),
                                inv_n_total: v.inv_n_total,
                            });
                        } else {
                            spread = e * m.sqrt();
                        }
                    } else {
                        spread = e * v.value(lo).max(0.0).sqrt();
                    }
                }
                Some(DualPieces {
                    inv_t: vec![0.0; h_count],
                    inv_tm1: alpha.clone(),
                    var_q,
                    var_params,
                    constant: base + spread - self.bound,
                })
            }
            Kind::Determinant { .. } => None,
        }
    }

    /// Report row in natural units.
    pub fn report_row(&self, n: &[f64]) -> ConstraintReport {
        match &self.kind {
            Kind::Determinant { r, .. } => {
                let g = self.eval(n);
                // g = r - tau |N|^{1/4}; report the scaled determinant side.
                let value = r - g;
                ConstraintReport {
                    name: self.name.clone(),
                    value,
                    bound: *r,
                    sense: Sense::GreaterEq,
                    slack: value - r,
                }
            }
            _ => {
                let value = self.eval(n) + self.bound;
                ConstraintReport {
                    name: self.name.clone(),
                    value,
                    bound: self.bound,
                    sense: Sense::LessEq,
                    slack: self.bound - value,
                }
            }
        }
    }
}

/// Shared ingredients of the constraint builders.
struct FrameView {
    w: Vec<f64>,
    n_total: f64,
    diag: Vec<Vec<f64>>, // diag[h][j] = s_hjj
}

impl FrameView {
    fn new(frame: &SurveyFrame) -> Self {
        let n_total = frame.total_population() as f64;
        let w: Vec<f64> = (0..frame.len()).map(|h| frame.relative_size(h)).collect();
        let diag = frame
            .strata()
            .iter()
            .map(|s| (0..frame.g()).map(|j| s.covariance.get(j, j)).collect())
            .collect();
        Self { w, n_total, diag }
    }
}

/// `Var_hat_j(n) <= v0_j` rows for every finite `v0_j`.
pub(crate) fn per_variable_rows(frame: &SurveyFrame, v0: &[f64]) -> Vec<Constraint> {
    let view = FrameView::new(frame);
    let mut rows = Vec::new();
    for (j, &bound) in v0.iter().enumerate() {
        if !bound.is_finite() {
            continue;
        }
        let a: Vec<f64> = (0..frame.len()).map(|h| view.w[h] * view.w[h] * view.diag[h][j]).collect();
        let base: f64 =
            -(0..frame.len()).map(|h| view.w[h] * view.diag[h][j] / view.n_total).sum::<f64>();
        rows.push(Constraint {
            name: format!("Var[{}]", frame.label(j)),
            kind: Kind::PlainVariance { a, base },
            bound,
        });
    }
    rows
}

/// `tr Cov_hat(n) <= tau`, the deterministic trace budget.
pub(crate) fn trace_deterministic_row(frame: &SurveyFrame, tau: f64) -> Constraint {
    let view = FrameView::new(frame);
    let a: Vec<f64> = (0..frame.len())
        .map(|h| view.w[h] * view.w[h] * view.diag[h].iter().sum::<f64>())
        .collect();
    let base: f64 = -(0..frame.len())
        .map(|h| view.w[h] * view.diag[h].iter().sum::<f64>() / view.n_total)
        .sum::<f64>();
    Constraint { name: "tr".into(), kind: Kind::PlainVariance { a, base }, bound: tau }
}

/// Extracts `q_h = m4_hj - (s_hj^2)^2` summed over the requested
/// characteristics, failing when a stratum lacks fourth moments or an excess
/// comes out meaningfully negative.
fn variance_coeffs(
    frame: &SurveyFrame,
    js: &[usize],
    view: &FrameView,
) -> Result<VarCoeffs, SolveError> {
    let g = frame.g();
    let mut q = Vec::with_capacity(frame.len());
    for (h, stratum) in frame.strata().iter().enumerate() {
        let m4 = stratum
            .fourth_moment_vech
            .as_ref()
            .ok_or(SolveError::MissingFourthMoment { stratum: h })?;
        let mut qh = 0.0;
        for &j in js {
            let idx = vech_index(g, j, j);
            let s2 = stratum.covariance.get(j, j);
            qh += m4.get(idx, idx) - s2 * s2;
        }
        let scale = m4.max_abs().max(1.0);
        if qh < -1e-9 * scale {
            return Err(SolveError::NegativeFourthMomentExcess { stratum: h });
        }
        q.push(qh.max(0.0));
    }
    Ok(VarCoeffs { w: view.w.clone(), inv_n_total: 1.0 / view.n_total, q })
}

fn chance_for_characteristics(
    frame: &SurveyFrame,
    js: &[usize],
    e: f64,
    bound: f64,
    name: String,
) -> Result<Constraint, SolveError> {
    let view = FrameView::new(frame);
    let sum_s = |h: usize| js.iter().map(|&j| view.diag[h][j]).sum::<f64>();
    let alpha: Vec<f64> = (0..frame.len())
        .map(|h| {
            let n_h = frame.stratum(h).population_size as f64;
            view.w[h] * (n_h - 1.0) / view.n_total * sum_s(h)
        })
        .collect();
    let base: f64 =
        -(0..frame.len()).map(|h| view.w[h] * sum_s(h) / view.n_total).sum::<f64>();
    let var = if e == 0.0 { None } else { Some(variance_coeffs(frame, js, &view)?) };
    Ok(Constraint { name, kind: Kind::Chance { alpha, base, e, var }, bound })
}

/// Per-characteristic chance rows: `E[Var_hat_j] + e sqrt(Var[Var_hat_j]) <= v0_j`.
pub(crate) fn prekopa_rows(
    frame: &SurveyFrame,
    v0: &[f64],
    e: f64,
) -> Result<Vec<Constraint>, SolveError> {
    let mut rows = Vec::new();
    for (j, &bound) in v0.iter().enumerate() {
        if !bound.is_finite() {
            continue;
        }
        rows.push(chance_for_characteristics(
            frame,
            &[j],
            e,
            bound,
            format!("P[Var[{}]]", frame.label(j)),
        )?);
    }
    Ok(rows)
}

/// Trace chance row: `E[tr] + e sqrt(Var[tr]) <= tau`.
pub(crate) fn trace_chance_row(
    frame: &SurveyFrame,
    tau: f64,
    e: f64,
) -> Result<Constraint, SolveError> {
    let js: Vec<usize> = (0..frame.g()).collect();
    chance_for_characteristics(frame, &js, e, tau, "P[tr]".into())
}

fn det_terms(frame: &SurveyFrame, require_psd_terms: bool) -> Result<Vec<Matrix>, SolveError> {
    if frame.g() != 2 {
        return Err(SolveError::DeterminantNeedsTwoCharacteristics { g: frame.g() });
    }
    let mut terms = Vec::with_capacity(frame.len());
    for (h, stratum) in frame.strata().iter().enumerate() {
        let m4 = stratum
            .fourth_moment_vec
            .as_ref()
            .ok_or(SolveError::MissingVecFourthMoment { stratum: h })?;
        let vs = vec_of(&stratum.covariance);
        let g2 = vs.len();
        let mut term = Matrix::zeros(g2, g2);
        for i in 0..g2 {
            for j in 0..g2 {
                term.set(i, j, m4.get(i, j) - vs[i] * vs[j]);
            }
        }
        if require_psd_terms && !term.is_positive_semidefinite(1e-8).unwrap_or(false) {
            return Err(SolveError::NegativeFourthMomentExcess { stratum: h });
        }
        terms.push(term);
    }
    Ok(terms)
}

/// Determinant chance row for `G = 2`:
/// `tau |det N(n)|^{1/4} >= r_p0` with
/// `N(n) = sum_h (w^2/n - w/N)^2 n/(n-1)^2 (m4vec_h - vec s_h vec' s_h)`.
pub(crate) fn det_chance_row(
    frame: &SurveyFrame,
    tau: f64,
    p0: f64,
    require_psd_terms: bool,
) -> Result<Constraint, SolveError> {
    let view = FrameView::new(frame);
    let terms = det_terms(frame, require_psd_terms)?;
    let r = crate::distributions::det_law_quantile(p0)?;
    Ok(Constraint {
        name: "tau*|N|^(1/4)".into(),
        kind: Kind::Determinant { terms, w: view.w, inv_n_total: 1.0 / view.n_total, r, tau },
        bound: 0.0,
    })
}

/// `|det N(n)|^{1/4}` at one point; the determinant-law comparison threshold
/// is `tau` times this.
pub(crate) fn det_fourth_root(frame: &SurveyFrame, n: &[f64]) -> Result<f64, SolveError> {
    let view = FrameView::new(frame);
    let terms = det_terms(frame, false)?;
    let g2 = terms[0].rows();
    let mut big_n = Matrix::zeros(g2, g2);
    for (h, &t) in n.iter().enumerate() {
        let wh = view.w[h];
        let coeff = wh * wh / t - wh / view.n_total;
        let scale = coeff * coeff * t / ((t - 1.0) * (t - 1.0));
        big_n.add_scaled(scale, &terms[h]).expect("shape");
    }
    Ok(big_n.det().expect("square").max(0.0).powf(0.25))
}
