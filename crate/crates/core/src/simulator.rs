//! Synthetic finite populations and Monte Carlo validation of the normal
//! approximation behind the chance constraints.
//!
//! Populations are generated once from a seeded counter-based generator
//! (ChaCha8 with one stream per purpose/replication/stratum), so serial and
//! parallel schedules would see identical draws and every report is
//! bit-reproducible. Sampling within strata is simple random sampling
//! without replacement.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{normal_cdf, normal_quantile};
use crate::estimators::{self, Allocation};
use crate::matcalc::{vech, vech_len, Matrix, VechVector};
use crate::strata::{summarize, CovarianceConvention, ModelError, RawStratumData, SurveyFrame};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid population spec{}: {message}", match stratum { Some(h) => format!(" (stratum {})", h + 1), None => String::new() })]
    InvalidSpec { stratum: Option<usize>, message: String },
    #[error("sample size {n} outside 2..={n_pop} in stratum {}", stratum + 1)]
    SampleSize { stratum: usize, n: u64, n_pop: usize },
    #[error("need at least {needed} replications, got {got}")]
    TooFewReplications { needed: u64, got: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] crate::estimators::EstimatorError),
    #[error(transparent)]
    Distribution(#[from] crate::distributions::DistError),
}

fn invalid(stratum: Option<usize>, message: impl Into<String>) -> SimError {
    SimError::InvalidSpec { stratum, message: message.into() }
}

/// Per-unit generator for one stratum.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StratumGenerator {
    /// Multivariate normal with the given mean vector and covariance.
    Gaussian { mean: Vec<f64>, covariance: Matrix },
    /// Componentwise lognormal: `exp(mu_j + sigma_j Z)`.
    Lognormal { mu: Vec<f64>, sigma: Vec<f64> },
    /// Each unit equals `low` or `high` (as vectors), taking `high` with
    /// probability `p_high`.
    TwoPoint { low: Vec<f64>, high: Vec<f64>, p_high: f64 },
}

impl StratumGenerator {
    fn g(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::Lognormal { mu, .. } => mu.len(),
            Self::TwoPoint { low, .. } => low.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumPopulationSpec {
    pub size: u64,
    pub generator: StratumGenerator,
}

/// Recipe for a deterministic synthetic stratified population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticPopulationSpec {
    pub strata: Vec<StratumPopulationSpec>,
    pub seed: u64,
}

impl SyntheticPopulationSpec {
    fn validate(&self) -> Result<(), SimError> {
        if self.strata.is_empty() {
            return Err(invalid(None, "population needs at least one stratum"));
        }
        let g = self.strata[0].generator.g();
        for (h, s) in self.strata.iter().enumerate() {
            if s.size < 4 {
                return Err(invalid(Some(h), format!("stratum size must be at least 4, got {}", s.size)));
            }
            if s.generator.g() != g {
                return Err(invalid(Some(h), "strata disagree on the number of characteristics"));
            }
            match &s.generator {
                StratumGenerator::Gaussian { mean, covariance } => {
                    if covariance.rows() != mean.len() || covariance.cols() != mean.len() {
                        return Err(invalid(Some(h), "covariance shape does not match the mean"));
                    }
                    if covariance.cholesky().is_err() {
                        return Err(invalid(Some(h), "covariance must be positive definite"));
                    }
                }
                StratumGenerator::Lognormal { mu, sigma } => {
                    if sigma.len() != mu.len() || sigma.iter().any(|s| s.is_nan() || *s <= 0.0) {
                        return Err(invalid(Some(h), "lognormal needs positive sigma per characteristic"));
                    }
                }
                StratumGenerator::TwoPoint { low, high, p_high } => {
                    if high.len() != low.len() {
                        return Err(invalid(Some(h), "two-point vectors disagree in length"));
                    }
                    if p_high.is_nan() || *p_high <= 0.0 || *p_high >= 1.0 {
                        return Err(invalid(Some(h), format!("p_high must lie in (0, 1), got {p_high}")));
                    }
                }
            }
        }
        Ok(())
    }
}

// Stream layout: purpose in the top bits, then replication, then stratum.
const PURPOSE_POPULATION: u64 = 1;
const PURPOSE_SAMPLING: u64 = 2;

fn substream(seed: u64, purpose: u64, replication: u64, stratum: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) | ((replication & 0xFF_FFFF_FFFF) << 16) | (stratum & 0xFFFF));
    rng
}

/// Generates the synthetic population, one matrix of units per stratum.
/// Deterministic in the spec's seed.
pub fn generate_population(spec: &SyntheticPopulationSpec) -> Result<Vec<RawStratumData>, SimError> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.strata.len());
    for (h, stratum) in spec.strata.iter().enumerate() {
        let mut rng = substream(spec.seed, PURPOSE_POPULATION, 0, h as u64);
        let g = stratum.generator.g();
        let n = stratum.size as usize;
        let mut data = Matrix::zeros(n, g);
        match &stratum.generator {
            StratumGenerator::Gaussian { mean, covariance } => {
                let chol = covariance.cholesky().expect("validated positive definite");
                for i in 0..n {
                    let z: Vec<f64> =
                        (0..g).map(|_| StandardNormal.sample(&mut rng)).collect();
                    for j in 0..g {
                        let mut v = mean[j];
                        for (k, zk) in z.iter().enumerate().take(j + 1) {
                            v += chol.get(j, k) * zk;
                        }
                        data.set(i, j, v);
                    }
                }
            }
            StratumGenerator::Lognormal { mu, sigma } => {
                for i in 0..n {
                    for j in 0..g {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        data.set(i, j, (mu[j] + sigma[j] * z).exp());
                    }
                }
            }
            StratumGenerator::TwoPoint { low, high, p_high } => {
                for i in 0..n {
                    let pick_high = rng.gen_bool(*p_high);
                    for j in 0..g {
                        data.set(i, j, if pick_high { high[j] } else { low[j] });
                    }
                }
            }
        }
        out.push(RawStratumData::new(data)?);
    }
    Ok(out)
}

/// One stratified sample: a uniformly random `n_h`-subset without
/// replacement from each stratum, on the sampling substream of
/// `(replication, stratum)`.
pub fn draw_replicate(
    population: &[RawStratumData],
    n: &[u64],
    seed: u64,
    replication: u64,
) -> Result<Vec<RawStratumData>, SimError> {
    if n.len() != population.len() {
        return Err(invalid(
            None,
            format!("{} sample sizes for {} strata", n.len(), population.len()),
        ));
    }
    let mut out = Vec::with_capacity(population.len());
    for (h, (pop, &nh)) in population.iter().zip(n).enumerate() {
        if nh < 2 || nh as usize > pop.n() {
            return Err(SimError::SampleSize { stratum: h, n: nh, n_pop: pop.n() });
        }
        let mut rng = substream(seed, PURPOSE_SAMPLING, replication, h as u64);
        let picked = rand::seq::index::sample(&mut rng, pop.n(), nh as usize);
        let g = pop.g();
        let mut data = Matrix::zeros(nh as usize, g);
        for (row, idx) in picked.iter().enumerate() {
            for j in 0..g {
                data.set(row, j, pop.observations().get(idx, j));
            }
        }
        out.push(RawStratumData::new(data)?);
    }
    Ok(out)
}

/// Convenience wrapper for a single draw (replication 0).
pub fn draw_stratified_sample(
    population: &[RawStratumData],
    n: &[u64],
    seed: u64,
) -> Result<Vec<RawStratumData>, SimError> {
    draw_replicate(population, n, seed, 0)
}

/// Compensated (Kahan) accumulator.
#[derive(Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum
    }
}

/// Empirical-versus-reference summary of one vech-valued statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub empirical_mean: Vec<f64>,
    pub reference_mean: Vec<f64>,
    /// Monte Carlo standard error of each empirical mean.
    pub mean_standard_error: Vec<f64>,
    pub empirical_cov: Matrix,
    pub reference_cov: Matrix,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    /// Largest gap between the empirical CDF and a normal fitted per
    /// component, maximized over components.
    pub max_cdf_gap: f64,
}

/// Normality diagnostics for the covariance estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    /// vech of the stratified covariance estimator against its asymptotic
    /// mean and covariance.
    pub stratified: ComponentStats,
    /// Per-stratum sample covariance `vech s_h` against the asymptotic
    /// moments (whose mean form is exact for the population-centered
    /// variant below, and asymptotic for `s_h` itself).
    pub per_stratum_s: Vec<ComponentStats>,
    /// Per-stratum population-centered second-moment matrix (the object the
    /// limit statement is actually written for).
    pub per_stratum_centered: Vec<ComponentStats>,
}

/// Monte Carlo report: coverage numbers and/or normality diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_p0: Option<f64>,
    /// 95% Wilson interval for the empirical probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wilson_interval: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normality: Option<NormalityReport>,
}

/// Builds a census frame from raw populations (population-divisor moments,
/// unit costs 1) so the estimator formulas can be evaluated with the true
/// moments.
pub fn population_frame(population: &[RawStratumData]) -> Result<SurveyFrame, SimError> {
    let mut strata = Vec::with_capacity(population.len());
    for pop in population {
        strata.push(summarize(pop, pop.n() as u64, 1.0, CovarianceConvention::Population)?);
    }
    Ok(SurveyFrame::new(strata, 0.0, None)?)
}

struct VecStats {
    k: usize,
    count: u64,
    means: Vec<KahanSum>,
    cross: Vec<KahanSum>,
    samples: Vec<Vec<f64>>,
}

impl VecStats {
    fn new(k: usize) -> Self {
        Self {
            k,
            count: 0,
            means: vec![KahanSum::default(); k],
            cross: vec![KahanSum::default(); k * k],
            samples: vec![Vec::new(); k],
        }
    }

    fn push(&mut self, v: &[f64]) {
        self.count += 1;
        for i in 0..self.k {
            self.means[i].add(v[i]);
            self.samples[i].push(v[i]);
            for j in 0..self.k {
                self.cross[i * self.k + j].add(v[i] * v[j]);
            }
        }
    }

    fn finish(self, reference_mean: Vec<f64>, reference_cov: Matrix) -> ComponentStats {
        let r = self.count as f64;
        let mean: Vec<f64> = self.means.iter().map(|m| m.value() / r).collect();
        let mut cov = Matrix::zeros(self.k, self.k);
        for i in 0..self.k {
            for j in 0..self.k {
                let second = self.cross[i * self.k + j].value() / r;
                cov.set(i, j, (second - mean[i] * mean[j]) * r / (r - 1.0));
            }
        }
        let se: Vec<f64> = (0..self.k).map(|i| (cov.get(i, i) / r).sqrt()).collect();
        let mut skewness = Vec::with_capacity(self.k);
        let mut kurtosis = Vec::with_capacity(self.k);
        let mut max_gap = 0.0f64;
        for i in 0..self.k {
            let sd = (cov.get(i, i) * (r - 1.0) / r).sqrt();
            let (mut m3, mut m4) = (KahanSum::default(), KahanSum::default());
            for &x in &self.samples[i] {
                let d = x - mean[i];
                m3.add(d * d * d);
                m4.add(d * d * d * d);
            }
            if sd > 0.0 {
                skewness.push(m3.value() / r / sd.powi(3));
                kurtosis.push(m4.value() / r / sd.powi(4) - 3.0);
                let mut sorted = self.samples[i].clone();
                sorted.sort_by(f64::total_cmp);
                for (rank, &x) in sorted.iter().enumerate() {
                    let fitted = normal_cdf((x - mean[i]) / sd);
                    let lo = rank as f64 / r;
                    let hi = (rank + 1) as f64 / r;
                    max_gap = max_gap.max((fitted - lo).abs()).max((fitted - hi).abs());
                }
            } else {
                skewness.push(0.0);
                kurtosis.push(0.0);
            }
        }
        ComponentStats {
            empirical_mean: mean,
            reference_mean,
            mean_standard_error: se,
            empirical_cov: cov,
            reference_cov,
            skewness,
            excess_kurtosis: kurtosis,
            max_cdf_gap: max_gap,
        }
    }
}

/// Sample covariance (divisor `n - 1`) of one drawn stratum.
fn sample_cov(sample: &RawStratumData) -> Matrix {
    let (n, g) = (sample.n(), sample.g());
    let mean = sample.mean();
    let mut acc = Matrix::zeros(g, g);
    for i in 0..n {
        for a in 0..g {
            let da = sample.observations().get(i, a) - mean[a];
            for b in 0..g {
                let db = sample.observations().get(i, b) - mean[b];
                acc.set(a, b, acc.get(a, b) + da * db);
            }
        }
    }
    acc.scale(1.0 / (n as f64 - 1.0))
}

/// Second-moment matrix centered at the true population mean (divisor
/// `n - 1`); its expectation under sampling without replacement is exactly
/// `n/(n-1)` times the population covariance.
fn centered_second_moment(sample: &RawStratumData, pop_mean: &[f64]) -> Matrix {
    let (n, g) = (sample.n(), sample.g());
    let mut acc = Matrix::zeros(g, g);
    for i in 0..n {
        for a in 0..g {
            let da = sample.observations().get(i, a) - pop_mean[a];
            for b in 0..g {
                let db = sample.observations().get(i, b) - pop_mean[b];
                acc.set(a, b, acc.get(a, b) + da * db);
            }
        }
    }
    acc.scale(1.0 / (n as f64 - 1.0))
}

/// Asymptotic per-stratum moments of `vech` of the covariance estimator:
/// mean `n/(n-1) vech S`, covariance `n/(n-1)^2 (M4 - vech S vech' S)`.
fn stratum_reference(frame: &SurveyFrame, h: usize, n: f64) -> (Vec<f64>, Matrix) {
    let stratum = frame.stratum(h);
    let vs = vech(&stratum.covariance).expect("square");
    let mean: Vec<f64> = vs.data().iter().map(|v| v * n / (n - 1.0)).collect();
    let m4 = stratum.fourth_moment_vech.as_ref().expect("population frame carries moments");
    let k = vs.len();
    let mut cov = Matrix::zeros(k, k);
    let coeff = n / ((n - 1.0) * (n - 1.0));
    for i in 0..k {
        for j in 0..k {
            cov.set(i, j, coeff * (m4.get(i, j) - vs.data()[i] * vs.data()[j]));
        }
    }
    (mean, cov)
}

/// Repeatedly samples the population, recomputes the covariance estimators,
/// and compares their empirical mean and covariance against the asymptotic
/// formulas evaluated with the true population moments.
pub fn validate_normality(
    population: &[RawStratumData],
    n: &[u64],
    replications: u64,
    seed: u64,
) -> Result<CoverageReport, SimError> {
    if replications < 1000 {
        return Err(SimError::TooFewReplications { needed: 1000, got: replications });
    }
    let frame = population_frame(population)?;
    if frame.strata().iter().all(|s| s.covariance.max_abs() == 0.0) {
        return Err(invalid(None, "degenerate population: zero variance in every stratum"));
    }
    let alloc = Allocation::new(n.to_vec(), &frame)?;
    let g = frame.g();
    let k = vech_len(g);
    let h_count = population.len();
    let pop_means: Vec<Vec<f64>> = population.iter().map(|p| p.mean()).collect();

    let mut stratified = VecStats::new(k);
    let mut per_s: Vec<VecStats> = (0..h_count).map(|_| VecStats::new(k)).collect();
    let mut per_centered: Vec<VecStats> = (0..h_count).map(|_| VecStats::new(k)).collect();

    for rep in 0..replications {
        let sample = draw_replicate(population, n, seed, rep)?;
        let mut strat_vech = vec![0.0; k];
        for h in 0..h_count {
            let s = sample_cov(&sample[h]);
            let vs = vech(&s).expect("square");
            per_s[h].push(vs.data());
            let xi = centered_second_moment(&sample[h], &pop_means[h]);
            per_centered[h].push(vech(&xi).expect("square").data());
            let w = estimators::weight(h, &alloc, &frame);
            for (acc, v) in strat_vech.iter_mut().zip(vs.data()) {
                *acc += w * v;
            }
        }
        stratified.push(&strat_vech);
    }

    let strat_ref_mean = estimators::vech_mean(&alloc, &frame);
    let strat_ref_cov = estimators::vech_cov(&alloc, &frame).expect("population frame");
    let stratified_stats =
        stratified.finish(strat_ref_mean.data().to_vec(), strat_ref_cov);

    let mut per_stratum_s = Vec::with_capacity(h_count);
    let mut per_stratum_centered = Vec::with_capacity(h_count);
    for (h, (s_stats, c_stats)) in per_s.into_iter().zip(per_centered).enumerate() {
        let (ref_mean, ref_cov) = stratum_reference(&frame, h, n[h] as f64);
        per_stratum_s.push(s_stats.finish(ref_mean.clone(), ref_cov.clone()));
        per_stratum_centered.push(c_stats.finish(ref_mean, ref_cov));
    }

    Ok(CoverageReport {
        replications,
        empirical_probability: None,
        nominal_p0: None,
        wilson_interval: None,
        normality: Some(NormalityReport {
            stratified: stratified_stats,
            per_stratum_s,
            per_stratum_centered,
        }),
    })
}

/// Functional whose coverage is being validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Trace,
    Det,
}

/// Exact design expectation and asymptotic variance of `tr Cov_hat` under
/// the true population moments. The mean uses the exact finite-population
/// expectation of the sample variances, `E s^2 = N/(N-1) S^2`.
pub fn expected_trace_moments(
    population: &[RawStratumData],
    n: &[u64],
) -> Result<(f64, f64), SimError> {
    let frame = population_frame(population)?;
    let alloc = Allocation::new(n.to_vec(), &frame)?;
    let mut mean = 0.0;
    for h in 0..frame.len() {
        let stratum = frame.stratum(h);
        let n_pop = stratum.population_size as f64;
        let w = estimators::weight(h, &alloc, &frame);
        for j in 0..frame.g() {
            mean += w * n_pop / (n_pop - 1.0) * stratum.covariance.get(j, j);
        }
    }
    let var = estimators::trace_moments(&alloc, &frame).expect("population frame").var;
    Ok((mean, var))
}

/// Trace budget whose normal approximation predicts coverage `p` for this
/// population and allocation.
pub fn trace_budget_for_coverage(
    population: &[RawStratumData],
    n: &[u64],
    p: f64,
) -> Result<f64, SimError> {
    let (mean, var) = expected_trace_moments(population, n)?;
    let e = if p == 0.5 { 0.0 } else { normal_quantile(p)? };
    Ok(mean + e * var.max(0.0).sqrt())
}

/// Empirical probability that the functional of the covariance estimator
/// stays within `tau`, against the nominal value the normal (or
/// determinant-law) approximation predicts.
pub fn validate_coverage(
    population: &[RawStratumData],
    n: &[u64],
    tau: f64,
    functional: Functional,
    replications: u64,
    seed: u64,
) -> Result<CoverageReport, SimError> {
    if replications < 1000 {
        return Err(SimError::TooFewReplications { needed: 1000, got: replications });
    }
    let frame = population_frame(population)?;
    let alloc = Allocation::new(n.to_vec(), &frame)?;
    let h_count = population.len();
    let k = vech_len(frame.g());

    // References from true population moments.
    let (mean_exact, var_asym) = expected_trace_moments(population, n)?;
    let strat_mean: VechVector = estimators::vech_mean(&alloc, &frame);
    let det_threshold = if functional == Functional::Det {
        let scale = crate::solvers::det_scale_factor(&frame, &alloc)
            .map_err(|e| invalid(None, e.to_string()))?;
        Some(tau * scale)
    } else {
        None
    };

    let mut covered = 0u64;
    for rep in 0..replications {
        let sample = draw_replicate(population, n, seed, rep)?;
        let mut strat_vech = vec![0.0; k];
        for h in 0..h_count {
            let s = sample_cov(&sample[h]);
            let w = estimators::weight(h, &alloc, &frame);
            for (acc, v) in strat_vech.iter_mut().zip(vech(&s).expect("square").data()) {
                *acc += w * v;
            }
        }
        let inside = match functional {
            Functional::Trace => {
                let tr: f64 =
                    (0..frame.g()).map(|j| strat_vech[crate::matcalc::vech_index(frame.g(), j, j)]).sum();
                tr <= tau
            }
            Functional::Det => {
                let centered: Vec<f64> = strat_vech
                    .iter()
                    .zip(strat_mean.data())
                    .map(|(v, m)| v - m)
                    .collect();
                let vv = crate::matcalc::vech_from_slice(&centered).expect("length");
                let det = crate::matcalc::vech_inverse(&vv).det().expect("square");
                det.abs() <= det_threshold.expect("computed above")
            }
        };
        if inside {
            covered += 1;
        }
    }

    let p_hat = covered as f64 / replications as f64;
    let nominal = match functional {
        Functional::Trace => {
            let sd = var_asym.max(0.0).sqrt();
            if sd > 0.0 {
                normal_cdf((tau - mean_exact) / sd)
            } else if tau >= mean_exact {
                1.0
            } else {
                0.0
            }
        }
        Functional::Det => {
            crate::distributions::det_law_cdf(det_threshold.expect("computed above"))
        }
    };

    // 95% Wilson interval.
    let z = 1.959963984540054;
    let r = replications as f64;
    let denom = 1.0 + z * z / r;
    let center = (p_hat + z * z / (2.0 * r)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / r + z * z / (4.0 * r * r)).sqrt() / denom;

    Ok(CoverageReport {
        replications,
        empirical_probability: Some(p_hat),
        nominal_p0: Some(nominal),
        wilson_interval: Some(((center - half).max(0.0), (center + half).min(1.0))),
        normality: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_point_spec(n: u64, seed: u64) -> SyntheticPopulationSpec {
        SyntheticPopulationSpec {
            strata: vec![StratumPopulationSpec {
                size: n,
                generator: StratumGenerator::TwoPoint {
                    low: vec![0.0],
                    high: vec![1.0],
                    p_high: 0.5,
                },
            }],
            seed,
        }
    }

    #[test]
    fn two_point_population_contains_both_values() {
        let pop = generate_population(&two_point_spec(4, 7)).unwrap();
        let col: Vec<f64> = (0..4).map(|i| pop[0].observations().get(i, 0)).collect();
        assert!(col.contains(&0.0) && col.contains(&1.0), "{col:?}");
    }

    #[test]
    fn population_generation_is_deterministic() {
        let a = generate_population(&two_point_spec(64, 99)).unwrap();
        let b = generate_population(&two_point_spec(64, 99)).unwrap();
        assert_eq!(a[0].observations().data(), b[0].observations().data());
        let c = generate_population(&two_point_spec(64, 100)).unwrap();
        assert_ne!(a[0].observations().data(), c[0].observations().data());
    }

    #[test]
    fn gaussian_population_matches_moments() {
        let cov = Matrix::from_rows(&[&[1.0, 0.5], &[0.5, 2.0]]);
        let spec = SyntheticPopulationSpec {
            strata: vec![StratumPopulationSpec {
                size: 100_000,
                generator: StratumGenerator::Gaussian { mean: vec![1.0, -2.0], covariance: cov.clone() },
            }],
            seed: 4242,
        };
        let pop = generate_population(&spec).unwrap();
        let summary = summarize(&pop[0], 100_000, 1.0, CovarianceConvention::Population).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let got = summary.covariance.get(a, b);
                let want = cov.get(a, b);
                assert!(
                    (got - want).abs() <= 0.03 * want.abs().max(1.0),
                    "covariance ({a},{b}): got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn lognormal_population_is_positive_and_skewed() {
        let spec = SyntheticPopulationSpec {
            strata: vec![StratumPopulationSpec {
                size: 5_000,
                generator: StratumGenerator::Lognormal { mu: vec![0.0], sigma: vec![0.7] },
            }],
            seed: 17,
        };
        let pop = generate_population(&spec).unwrap();
        let values: Vec<f64> = (0..5_000).map(|i| pop[0].observations().get(i, 0)).collect();
        assert!(values.iter().all(|v| *v > 0.0));
        let mean = values.iter().sum::<f64>() / 5_000.0;
        let median = {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            sorted[2_500]
        };
        assert!(mean > median, "lognormal draws must skew right");
    }

    #[test]
    fn census_draw_returns_whole_stratum() {
        let pop = generate_population(&two_point_spec(8, 3)).unwrap();
        let sample = draw_stratified_sample(&pop, &[8], 11).unwrap();
        let mut got: Vec<f64> = (0..8).map(|i| sample[0].observations().get(i, 0)).collect();
        let mut want: Vec<f64> = (0..8).map(|i| pop[0].observations().get(i, 0)).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        assert_eq!(got, want);
    }

    #[test]
    fn undersized_draw_rejected() {
        let pop = generate_population(&two_point_spec(8, 3)).unwrap();
        assert!(matches!(
            draw_stratified_sample(&pop, &[1], 11),
            Err(SimError::SampleSize { .. })
        ));
        assert!(matches!(
            draw_stratified_sample(&pop, &[9], 11),
            Err(SimError::SampleSize { .. })
        ));
    }

    #[test]
    fn srswor_subsets_are_uniform() {
        // N = 4, n = 2: each of the 6 subsets should appear with frequency
        // 1/6 within 0.01 over 1e5 draws.
        let values = Matrix::from_rows(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let pop = vec![RawStratumData::new(values).unwrap()];
        let mut counts = std::collections::HashMap::new();
        let draws = 100_000u64;
        for rep in 0..draws {
            let s = draw_replicate(&pop, &[2], 5, rep).unwrap();
            let mut pair =
                [s[0].observations().get(0, 0) as i64, s[0].observations().get(1, 0) as i64];
            pair.sort_unstable();
            *counts.entry(pair).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (pair, count) in counts {
            let freq = count as f64 / draws as f64;
            assert!(
                (freq - 1.0 / 6.0).abs() < 0.01,
                "subset {pair:?} frequency {freq}"
            );
        }
    }

    #[test]
    fn census_allocation_degenerates_every_estimator() {
        let pop = generate_population(&two_point_spec(16, 21)).unwrap();
        let frame = population_frame(&pop).unwrap();
        let census = Allocation::census(&frame);
        // Identical draws across replications (the whole stratum each time)
        // and a vanishing weight: the stratified estimator is constant 0.
        for rep in 0..5 {
            let sample = draw_replicate(&pop, &[16], 9, rep).unwrap();
            let s = sample_cov(&sample[0]);
            let w = estimators::weight(0, &census, &frame);
            assert_abs_diff_eq!(w * s.get(0, 0), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn normality_validator_matches_exact_mean_law() {
        // Moderate scale so the unit test stays quick; the acceptance suite
        // runs the full-size configuration.
        let spec = SyntheticPopulationSpec {
            strata: vec![StratumPopulationSpec {
                size: 2_000,
                generator: StratumGenerator::Gaussian {
                    mean: vec![0.0],
                    covariance: Matrix::from_rows(&[&[2.0]]),
                },
            }],
            seed: 31,
        };
        let pop = generate_population(&spec).unwrap();
        let report = validate_normality(&pop, &[50], 2_000, 77).unwrap();
        let normality = report.normality.unwrap();
        let centered = &normality.per_stratum_centered[0];
        // The population-centered matrix has exact mean n/(n-1) S^2.
        let gap = (centered.empirical_mean[0] - centered.reference_mean[0]).abs();
        assert!(
            gap <= 3.5 * centered.mean_standard_error[0],
            "centered mean off by {gap} vs SE {}",
            centered.mean_standard_error[0]
        );
        // Covariance within 15% at this scale.
        let rel = (centered.empirical_cov.get(0, 0) - centered.reference_cov.get(0, 0)).abs()
            / centered.reference_cov.get(0, 0);
        assert!(rel < 0.15, "relative covariance gap {rel}");
    }

    #[test]
    fn coverage_extremes() {
        let spec = SyntheticPopulationSpec {
            strata: vec![StratumPopulationSpec {
                size: 500,
                generator: StratumGenerator::Gaussian {
                    mean: vec![0.0],
                    covariance: Matrix::from_rows(&[&[1.0]]),
                },
            }],
            seed: 8,
        };
        let pop = generate_population(&spec).unwrap();
        let huge = validate_coverage(&pop, &[25], 1e12, Functional::Trace, 1000, 5).unwrap();
        assert_abs_diff_eq!(huge.empirical_probability.unwrap(), 1.0);
        let tiny = validate_coverage(&pop, &[25], 1e-12, Functional::Trace, 1000, 5).unwrap();
        assert_abs_diff_eq!(tiny.empirical_probability.unwrap(), 0.0);
    }

    #[test]
    fn coverage_monotone_in_tau() {
        let spec = SyntheticPopulationSpec {
            strata: vec![StratumPopulationSpec {
                size: 500,
                generator: StratumGenerator::Gaussian {
                    mean: vec![0.0],
                    covariance: Matrix::from_rows(&[&[1.0]]),
                },
            }],
            seed: 8,
        };
        let pop = generate_population(&spec).unwrap();
        let budget = trace_budget_for_coverage(&pop, &[25], 0.5).unwrap();
        let mut prev = -1.0;
        for mult in [0.6, 0.9, 1.0, 1.1, 1.5] {
            let rep =
                validate_coverage(&pop, &[25], budget * mult, Functional::Trace, 1000, 5).unwrap();
            let p = rep.empirical_probability.unwrap();
            assert!(p >= prev, "coverage must grow with tau");
            prev = p;
        }
    }

    #[test]
    fn reports_are_bit_reproducible() {
        let spec = two_point_spec(200, 13);
        let pop = generate_population(&spec).unwrap();
        let a = validate_coverage(&pop, &[20], 0.01, Functional::Trace, 1000, 99).unwrap();
        let b = validate_coverage(&pop, &[20], 0.01, Functional::Trace, 1000, 99).unwrap();
        assert_eq!(a, b);
        let na = validate_normality(&pop, &[20], 1000, 99).unwrap();
        let nb = validate_normality(&pop, &[20], 1000, 99).unwrap();
        assert_eq!(na, nb);
    }

    #[test]
    fn degenerate_population_flagged() {
        let constant = Matrix::from_rows(&[&[2.0], &[2.0], &[2.0], &[2.0]]);
        let pop = vec![RawStratumData::new(constant).unwrap()];
        match validate_normality(&pop, &[2], 1000, 1) {
            Err(SimError::InvalidSpec { message, .. }) => {
                assert!(message.contains("degenerate"), "{message}");
            }
            other => panic!("expected the degeneracy flag, got {other:?}"),
        }
    }

    #[test]
    fn det_functional_degenerates_on_genuine_moments() {
        // The vec-coordinate fourth-moment excess of any real population is
        // singular (symmetry kills the antisymmetric direction of vec), so
        // the determinant threshold collapses to rounding noise and both
        // the empirical and the nominal coverage sit at essentially zero,
        // far below any useful p0.
        let spec = SyntheticPopulationSpec {
            strata: vec![StratumPopulationSpec {
                size: 400,
                generator: StratumGenerator::Gaussian {
                    mean: vec![0.0, 0.0],
                    covariance: Matrix::from_rows(&[&[1.0, 0.3], &[0.3, 1.0]]),
                },
            }],
            seed: 77,
        };
        let pop = generate_population(&spec).unwrap();
        let frame = population_frame(&pop).unwrap();
        let alloc = Allocation::new(vec![20], &frame).unwrap();

        // The antisymmetric direction is (numerically) in the null space of
        // every term, so the scale factor is rounding-level small compared
        // with the matrix entries themselves.
        let m4 = frame.stratum(0).fourth_moment_vec.as_ref().unwrap();
        let vs = crate::matcalc::vec_of(&frame.stratum(0).covariance);
        let anti = [0.0, 1.0, -1.0, 0.0];
        let mut image = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                image[i] += (m4.get(i, j) - vs[i] * vs[j]) * anti[j];
            }
        }
        let worst = image.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-10 * m4.max_abs(), "null direction residual {worst}");
        let scale = crate::solvers::det_scale_factor(&frame, &alloc).unwrap();
        assert!(scale < 1e-4, "threshold scale {scale}");

        let report = validate_coverage(&pop, &[20], 5.0, Functional::Det, 1000, 3).unwrap();
        assert!(report.empirical_probability.unwrap() <= 0.02);
        assert!(report.nominal_p0.unwrap() <= 0.02);
    }

    #[test]
    fn too_few_replications_rejected() {
        let pop = generate_population(&two_point_spec(16, 3)).unwrap();
        assert!(matches!(
            validate_normality(&pop, &[4], 10, 1),
            Err(SimError::TooFewReplications { .. })
        ));
    }
}
