//! Stratified-population data model and file ingestion.
//!
//! A [`SurveyFrame`] holds one [`StratumSummary`] per stratum: population
//! size, unit cost, a covariance matrix, and (optionally) the fourth central
//! moment matrices needed by the chance-constrained formulations. Summaries
//! come either from files (CSV for flat variance/covariance tables, JSON for
//! full matrices) or from raw per-unit observations via [`summarize`].

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcalc::{duplication_pinv, kron, vech, vech_len, MatError, Matrix};

/// Tolerance for positive-semidefiniteness validation, relative to the
/// largest matrix entry.
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("matrix error: {0}")]
    Matrix(#[from] MatError),
    #[error("invalid survey data{}: {message}", stratum_label(.stratum))]
    Validation { stratum: Option<usize>, message: String },
}

fn stratum_label(stratum: &Option<usize>) -> String {
    match stratum {
        Some(h) => format!(" (stratum {})", h + 1),
        None => String::new(),
    }
}

fn invalid(stratum: Option<usize>, message: impl Into<String>) -> ModelError {
    ModelError::Validation { stratum, message: message.into() }
}

/// Input format accepted by [`load_survey`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Json,
}

/// Which divisor convention a summary uses.
///
/// `Sample` is the unbiased pilot-study convention: covariance divided by
/// `n - 1`, fourth moments by `n`. `Population` treats the observations as a
/// census of the stratum and divides both by `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceConvention {
    #[default]
    Sample,
    Population,
}

/// Per-stratum pilot statistics: size, cost and moment matrices.
#[derive(Debug, Clone)]
pub struct StratumSummary {
    /// Number of population units in the stratum (`N_h`).
    pub population_size: u64,
    /// Cost per sampled unit (`c_h`).
    pub unit_cost: f64,
    /// `G x G` covariance matrix of the characteristics.
    pub covariance: Matrix,
    /// `k x k` fourth central moment matrix in vech coordinates
    /// (`k = G(G+1)/2`), if available.
    pub fourth_moment_vech: Option<Matrix>,
    /// `G^2 x G^2` fourth central moment matrix in vec coordinates, if
    /// available; only the determinant-law formulation needs it.
    pub fourth_moment_vec: Option<Matrix>,
    /// Size of the pilot sample the statistics came from. This is a fixed
    /// property of the data, never the allocation decision variable.
    pub pilot_sample_size: Option<u64>,
}

impl StratumSummary {
    /// Number of characteristics.
    pub fn g(&self) -> usize {
        self.covariance.rows()
    }

    fn validate(&self, h: usize, g: usize) -> Result<(), ModelError> {
        if self.population_size < 2 {
            return Err(invalid(
                Some(h),
                format!("population size must be at least 2, got {}", self.population_size),
            ));
        }
        if self.unit_cost < 0.0 || self.unit_cost.is_nan() {
            return Err(invalid(Some(h), format!("unit cost must be nonnegative, got {}", self.unit_cost)));
        }
        if self.covariance.rows() != g || self.covariance.cols() != g {
            return Err(invalid(
                Some(h),
                format!(
                    "covariance is {}x{}, expected {g}x{g}",
                    self.covariance.rows(),
                    self.covariance.cols()
                ),
            ));
        }
        if !self.covariance.is_symmetric() {
            return Err(invalid(Some(h), "covariance matrix is not symmetric"));
        }
        if !self.covariance.is_positive_semidefinite(PSD_TOL)? {
            return Err(invalid(Some(h), "covariance matrix is not positive semidefinite"));
        }
        let k = vech_len(g);
        if let Some(m4) = &self.fourth_moment_vech {
            if m4.rows() != k || m4.cols() != k {
                return Err(invalid(
                    Some(h),
                    format!("vech fourth moment is {}x{}, expected {k}x{k}", m4.rows(), m4.cols()),
                ));
            }
            if !m4.is_symmetric() {
                return Err(invalid(Some(h), "vech fourth moment matrix is not symmetric"));
            }
            // m4 - vech(S) vech(S)' is the asymptotic covariance of vech of
            // the sample covariance; file-supplied data must keep it PSD.
            let vs = vech(&self.covariance)?;
            let mut excess = m4.clone();
            for i in 0..k {
                for j in 0..k {
                    let v = excess.get(i, j) - vs.data()[i] * vs.data()[j];
                    excess.set(i, j, v);
                }
            }
            if !excess.is_positive_semidefinite(PSD_TOL)? {
                return Err(invalid(
                    Some(h),
                    "fourth moment minus vech-covariance outer product is not positive semidefinite",
                ));
            }
        }
        if let Some(m4) = &self.fourth_moment_vec {
            let gg = g * g;
            if m4.rows() != gg || m4.cols() != gg {
                return Err(invalid(
                    Some(h),
                    format!("vec fourth moment is {}x{}, expected {gg}x{gg}", m4.rows(), m4.cols()),
                ));
            }
            if !m4.is_symmetric() {
                return Err(invalid(Some(h), "vec fourth moment matrix is not symmetric"));
            }
        }
        if let Some(n) = self.pilot_sample_size {
            if n < 2 {
                return Err(invalid(Some(h), format!("pilot sample size must be at least 2, got {n}")));
            }
        }
        Ok(())
    }
}

/// A full stratified population: strata plus global metadata.
#[derive(Debug, Clone)]
pub struct SurveyFrame {
    strata: Vec<StratumSummary>,
    g: usize,
    fixed_cost: f64,
    labels: Option<Vec<String>>,
}

impl SurveyFrame {
    pub fn new(
        strata: Vec<StratumSummary>,
        fixed_cost: f64,
        labels: Option<Vec<String>>,
    ) -> Result<Self, ModelError> {
        if strata.is_empty() {
            return Err(invalid(None, "survey frame needs at least one stratum"));
        }
        let g = strata[0].g();
        if g == 0 {
            return Err(invalid(Some(0), "stratum has no characteristics"));
        }
        for (h, s) in strata.iter().enumerate() {
            s.validate(h, g)?;
        }
        if fixed_cost < 0.0 || fixed_cost.is_nan() {
            return Err(invalid(None, format!("fixed cost must be nonnegative, got {fixed_cost}")));
        }
        if let Some(l) = &labels {
            if l.len() != g {
                return Err(invalid(None, format!("{} labels for {g} characteristics", l.len())));
            }
        }
        let frame = Self { strata, g, fixed_cost, labels };
        let total: f64 = frame.strata.iter().map(|s| s.weight_in(&frame)).sum();
        debug_assert!((total - 1.0).abs() <= 1e-12, "stratum weights sum to {total}");
        Ok(frame)
    }

    pub fn strata(&self) -> &[StratumSummary] {
        &self.strata
    }

    pub fn stratum(&self, h: usize) -> &StratumSummary {
        &self.strata[h]
    }

    /// Number of strata (`H`).
    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    /// Number of characteristics (`G`).
    pub fn g(&self) -> usize {
        self.g
    }

    /// Fixed cost term `c_0` added to every allocation cost.
    pub fn fixed_cost(&self) -> f64 {
        self.fixed_cost
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label for characteristic `j`, falling back to `y<j+1>`.
    pub fn label(&self, j: usize) -> String {
        match &self.labels {
            Some(l) => l[j].clone(),
            None => format!("y{}", j + 1),
        }
    }

    /// Total population size `N`.
    pub fn total_population(&self) -> u64 {
        self.strata.iter().map(|s| s.population_size).sum()
    }

    /// Relative stratum size `W_h = N_h / N`.
    pub fn relative_size(&self, h: usize) -> f64 {
        self.strata[h].weight_in(self)
    }

    /// True when every stratum carries a vech fourth moment matrix.
    pub fn has_vech_fourth_moments(&self) -> bool {
        self.strata.iter().all(|s| s.fourth_moment_vech.is_some())
    }

    /// Serializes the frame to the JSON interchange schema.
    pub fn to_json_string(&self) -> Result<String, ModelError> {
        let doc = JsonFrame {
            g: self.g as i64,
            fixed_cost: self.fixed_cost,
            labels: self.labels.clone(),
            strata: self
                .strata
                .iter()
                .map(|s| JsonStratum {
                    n_population: s.population_size as i64,
                    cost: s.unit_cost,
                    covariance: matrix_to_rows(&s.covariance),
                    m4_vech: s.fourth_moment_vech.as_ref().map(matrix_to_rows),
                    m4_vec: s.fourth_moment_vec.as_ref().map(matrix_to_rows),
                    pilot_n: s.pilot_sample_size.map(|n| n as i64),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

impl StratumSummary {
    fn weight_in(&self, frame: &SurveyFrame) -> f64 {
        self.population_size as f64 / frame.total_population() as f64
    }
}

/// Raw per-unit observations for one stratum: `n_h` rows by `G` columns.
#[derive(Debug, Clone)]
pub struct RawStratumData {
    observations: Matrix,
}

impl RawStratumData {
    pub fn new(observations: Matrix) -> Result<Self, ModelError> {
        if observations.rows() < 2 {
            return Err(invalid(None, "raw stratum data needs at least 2 rows"));
        }
        Ok(Self { observations })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, ModelError> {
        Self::new(Matrix::from_rows(rows))
    }

    pub fn observations(&self) -> &Matrix {
        &self.observations
    }

    pub fn n(&self) -> usize {
        self.observations.rows()
    }

    pub fn g(&self) -> usize {
        self.observations.cols()
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let (n, g) = (self.n(), self.g());
        let mut mean = vec![0.0; g];
        for i in 0..n {
            for j in 0..g {
                mean[j] += self.observations.get(i, j);
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        mean
    }
}

/// Computes a [`StratumSummary`] from raw observations.
///
/// Covariance uses `1/(n-1)` under the `Sample` convention and `1/N` under
/// `Population`; the fourth moment matrices use `1/n` and `1/N` respectively.
/// The vech fourth moment is `D_G^+ [sum (d d') (x) (d d')] D_G^{+'}` over
/// centered rows `d`, divided by the convention divisor; the vec fourth
/// moment is the same sum without the duplication-pseudoinverse wrapping.
pub fn summarize(
    raw: &RawStratumData,
    population_size: u64,
    unit_cost: f64,
    convention: CovarianceConvention,
) -> Result<StratumSummary, ModelError> {
    let n = raw.n();
    let g = raw.g();
    if convention == CovarianceConvention::Population && population_size as usize != n {
        return Err(invalid(
            None,
            format!("population convention expects all {population_size} units, got {n} rows"),
        ));
    }
    let mean = raw.mean();
    let mut cov_sum = Matrix::zeros(g, g);
    let mut m4_vec_sum = Matrix::zeros(g * g, g * g);
    for i in 0..n {
        let d: Vec<f64> = (0..g).map(|j| raw.observations.get(i, j) - mean[j]).collect();
        let dcol = Matrix::column(&d);
        let outer = dcol.matmul(&dcol.transpose()).expect("shape");
        cov_sum.add_scaled(1.0, &outer).expect("shape");
        m4_vec_sum.add_scaled(1.0, &kron(&outer, &outer)).expect("shape");
    }
    let (cov_div, m4_div) = match convention {
        CovarianceConvention::Sample => ((n - 1) as f64, n as f64),
        CovarianceConvention::Population => (n as f64, n as f64),
    };
    let covariance = cov_sum.scale(1.0 / cov_div);
    let pinv = duplication_pinv(g);
    let m4_vech = pinv
        .matmul(&m4_vec_sum)
        .expect("shape")
        .matmul(&pinv.transpose())
        .expect("shape")
        .scale(1.0 / m4_div);
    let m4_vec = m4_vec_sum.scale(1.0 / m4_div);
    Ok(StratumSummary {
        population_size,
        unit_cost,
        covariance,
        fourth_moment_vech: Some(m4_vech),
        fourth_moment_vec: Some(m4_vec),
        pilot_sample_size: Some(n as u64),
    })
}

/// Loads a survey frame from a file, dispatching on `format`.
pub fn load_survey(path: &Path, format: FileFormat) -> Result<SurveyFrame, ModelError> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    match format {
        FileFormat::Csv => parse_csv(&text),
        FileFormat::Json => parse_json(&text),
    }
}

/// Guesses the format from the file extension, defaulting to CSV.
pub fn format_for_path(path: &Path) -> FileFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => FileFormat::Json,
        _ => FileFormat::Csv,
    }
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct JsonFrame {
    g: i64,
    fixed_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    strata: Vec<JsonStratum>,
}

#[derive(Serialize, Deserialize)]
struct JsonStratum {
    n_population: i64,
    cost: f64,
    covariance: Vec<Vec<f64>>,
    #[serde(default)]
    m4_vech: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    m4_vec: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pilot_n: Option<i64>,
}

fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str, stratum: usize) -> Result<Matrix, ModelError> {
    if rows.is_empty() {
        return Err(invalid(Some(stratum), format!("{what} matrix is empty")));
    }
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        if r.len() != cols {
            return Err(invalid(Some(stratum), format!("{what} matrix has ragged rows")));
        }
        data.extend_from_slice(r);
    }
    Ok(Matrix::new(rows.len(), cols, data)?)
}

fn parse_json(text: &str) -> Result<SurveyFrame, ModelError> {
    let doc: JsonFrame = serde_json::from_str(text)?;
    if doc.g <= 0 {
        return Err(invalid(None, format!("number of characteristics must be positive, got {}", doc.g)));
    }
    let g = doc.g as usize;
    let mut strata = Vec::with_capacity(doc.strata.len());
    for (h, s) in doc.strata.iter().enumerate() {
        if s.n_population < 2 {
            return Err(invalid(
                Some(h),
                format!("population size must be at least 2, got {}", s.n_population),
            ));
        }
        if let Some(p) = s.pilot_n {
            if p < 2 {
                return Err(invalid(Some(h), format!("pilot sample size must be at least 2, got {p}")));
            }
        }
        strata.push(StratumSummary {
            population_size: s.n_population as u64,
            unit_cost: s.cost,
            covariance: rows_to_matrix(&s.covariance, "covariance", h)?,
            fourth_moment_vech: s
                .m4_vech
                .as_ref()
                .map(|m| rows_to_matrix(m, "m4_vech", h))
                .transpose()?,
            fourth_moment_vec: s
                .m4_vec
                .as_ref()
                .map(|m| rows_to_matrix(m, "m4_vec", h))
                .transpose()?,
            pilot_sample_size: s.pilot_n.map(|p| p as u64),
        });
    }
    let frame = SurveyFrame::new(strata, doc.fixed_cost, doc.labels)?;
    if frame.g() != g {
        return Err(invalid(
            None,
            format!("covariance matrices are {}x{} but g = {g}", frame.g(), frame.g()),
        ));
    }
    Ok(frame)
}

/// Parses a frame from JSON text.
pub fn survey_from_json(text: &str) -> Result<SurveyFrame, ModelError> {
    parse_json(text)
}

// ---------------------------------------------------------------------------
// CSV schema
// ---------------------------------------------------------------------------

// Header: stratum,N,cost,var_<label1>,...,var_<labelG>,cov_<i>_<j>,...
// with covariance columns for i < j in lexicographic order. One row per
// stratum. Fourth moments cannot be carried in this flat format.
fn parse_csv(text: &str) -> Result<SurveyFrame, ModelError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let names: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    if names.len() < 4 || names[0] != "stratum" || names[1] != "N" || names[2] != "cost" {
        return Err(invalid(None, "csv header must start with stratum,N,cost,var_..."));
    }
    let mut labels = Vec::new();
    let mut idx = 3;
    while idx < names.len() {
        if let Some(label) = names[idx].strip_prefix("var_") {
            labels.push(label.to_string());
            idx += 1;
        } else {
            break;
        }
    }
    let g = labels.len();
    if g == 0 {
        return Err(invalid(None, "csv header has no var_<label> columns"));
    }
    let mut cov_pairs = Vec::new();
    for name in &names[idx..] {
        let rest = name
            .strip_prefix("cov_")
            .ok_or_else(|| invalid(None, format!("unexpected csv column `{name}`")))?;
        let (i, j) = parse_cov_pair(rest, g)
            .ok_or_else(|| invalid(None, format!("cannot parse covariance column `{name}`")))?;
        cov_pairs.push((i, j));
    }
    if cov_pairs.len() != g * (g - 1) / 2 {
        return Err(invalid(
            None,
            format!("expected {} covariance columns, found {}", g * (g - 1) / 2, cov_pairs.len()),
        ));
    }

    let mut strata = Vec::new();
    for (h, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| -> Result<f64, ModelError> {
            record
                .get(k)
                .ok_or_else(|| invalid(Some(h), "missing csv field"))?
                .parse::<f64>()
                .map_err(|e| invalid(Some(h), format!("bad number in column {}: {e}", names[k])))
        };
        let n_pop = field(1)?;
        if n_pop.is_nan() || n_pop < 2.0 || n_pop.fract() != 0.0 {
            return Err(invalid(
                Some(h),
                format!("population size must be an integer of at least 2, got {n_pop}"),
            ));
        }
        let cost = field(2)?;
        let mut cov = Matrix::zeros(g, g);
        for j in 0..g {
            cov.set(j, j, field(3 + j)?);
        }
        for (col, (i, j)) in cov_pairs.iter().enumerate() {
            let v = field(3 + g + col)?;
            cov.set(*i, *j, v);
            cov.set(*j, *i, v);
        }
        strata.push(StratumSummary {
            population_size: n_pop as u64,
            unit_cost: cost,
            covariance: cov,
            fourth_moment_vech: None,
            fourth_moment_vec: None,
            pilot_sample_size: None,
        });
    }
    SurveyFrame::new(strata, 0.0, Some(labels))
}

fn parse_cov_pair(rest: &str, g: usize) -> Option<(usize, usize)> {
    let (a, b) = rest.split_once('_')?;
    let i: usize = a.parse().ok()?;
    let j: usize = b.parse().ok()?;
    if i >= 1 && j > i && j <= g {
        Some((i - 1, j - 1))
    } else {
        None
    }
}
