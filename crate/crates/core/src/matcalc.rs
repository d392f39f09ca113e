//! Small dense matrix kernel and the half-vectorization operators used by the
//! moment formulas: Kronecker product, `vec`, `vech`, commutation matrix
//! `K_mn`, duplication matrix `D_n` and its Moore-Penrose inverse.
//!
//! Matrices are row-major and small (survey characteristic counts rarely
//! exceed a handful), so everything here favors clarity over BLAS-style
//! performance. `vech` uses lower-triangular column-major order: elements
//! `(i, j)` with `i >= j`, column by column. The duplication matrix and its
//! pseudo-inverse are built to be consistent with that ordering.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Relative tolerance for symmetry tests.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("data length {got} does not match {rows}x{cols}")]
    InvalidData { rows: usize, cols: usize, got: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: String, right: String },
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("vector length {len} is not g(g+1)/2 for any g")]
    InvalidVechLength { len: usize },
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if data.len() != rows * cols {
            return Err(MatError::InvalidData { rows, cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices.
    ///
    /// # Panics
    /// Panics on empty or ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "matrix needs at least one row");
        let cols = rows[0].len();
        assert!(cols > 0, "matrix needs at least one column");
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "row {i} has {} columns, expected {cols}", r.len());
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    /// Column vector from a slice.
    pub fn column(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j);
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatError> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatError> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    /// Accumulates `alpha * other` into `self` in place.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<(), MatError> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), MatError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatError::DimMismatch {
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, MatError> {
        if self.cols != other.rows {
            return Err(MatError::DimMismatch {
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += aik * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Applies the matrix to a vector.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, MatError> {
        if self.cols != v.len() {
            return Err(MatError::DimMismatch {
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}", v.len()),
            });
        }
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self.get(i, j) * v[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Symmetry up to `SYMMETRY_TOL` relative to the largest entry.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.max_asymmetry() <= SYMMETRY_TOL * self.max_abs().max(1.0)
    }

    pub fn trace(&self) -> Result<f64, MatError> {
        self.require_square()?;
        Ok((0..self.rows).map(|i| self.get(i, i)).sum())
    }

    /// Determinant: direct expansion up to 4x4, LU with partial pivoting above.
    pub fn det(&self) -> Result<f64, MatError> {
        self.require_square()?;
        let n = self.rows;
        let d = &self.data;
        Ok(match n {
            0 => 1.0,
            1 => d[0],
            2 => d[0] * d[3] - d[1] * d[2],
            3 => {
                d[0] * (d[4] * d[8] - d[5] * d[7]) - d[1] * (d[3] * d[8] - d[5] * d[6])
                    + d[2] * (d[3] * d[7] - d[4] * d[6])
            }
            4 => {
                let m = |i: usize, j: usize| d[i * 4 + j];
                let s0 = m(0, 0) * m(1, 1) - m(1, 0) * m(0, 1);
                let s1 = m(0, 0) * m(1, 2) - m(1, 0) * m(0, 2);
                let s2 = m(0, 0) * m(1, 3) - m(1, 0) * m(0, 3);
                let s3 = m(0, 1) * m(1, 2) - m(1, 1) * m(0, 2);
                let s4 = m(0, 1) * m(1, 3) - m(1, 1) * m(0, 3);
                let s5 = m(0, 2) * m(1, 3) - m(1, 2) * m(0, 3);
                let c5 = m(2, 2) * m(3, 3) - m(3, 2) * m(2, 3);
                let c4 = m(2, 1) * m(3, 3) - m(3, 1) * m(2, 3);
                let c3 = m(2, 1) * m(3, 2) - m(3, 1) * m(2, 2);
                let c2 = m(2, 0) * m(3, 3) - m(3, 0) * m(2, 3);
                let c1 = m(2, 0) * m(3, 2) - m(3, 0) * m(2, 2);
                let c0 = m(2, 0) * m(3, 1) - m(3, 0) * m(2, 1);
                s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
            }
            _ => self.det_lu(),
        })
    }

    fn det_lu(&self) -> f64 {
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                return 0.0;
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                det = -det;
            }
            let pivot = a[k * n + k];
            det *= pivot;
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                for j in (k + 1)..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        det
    }

    /// Positive definiteness via leading principal minors (Sylvester's
    /// criterion); requires a symmetric input.
    pub fn is_positive_definite(&self) -> Result<bool, MatError> {
        self.require_square()?;
        if !self.is_symmetric() {
            return Err(MatError::NotSymmetric { max_asymmetry: self.max_asymmetry() });
        }
        for k in 1..=self.rows {
            let mut minor = Matrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    minor.set(i, j, self.get(i, j));
                }
            }
            if minor.det()? <= 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Positive semidefiniteness within an absolute tolerance scaled by the
    /// largest entry, via the Jacobi eigenvalue sweep.
    pub fn is_positive_semidefinite(&self, tol: f64) -> Result<bool, MatError> {
        let eigs = self.sym_eigenvalues()?;
        let scale = self.max_abs().max(1.0);
        Ok(eigs.into_iter().all(|e| e >= -tol * scale))
    }

    /// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
    pub fn sym_eigenvalues(&self) -> Result<Vec<f64>, MatError> {
        self.require_square()?;
        if !self.is_symmetric() {
            return Err(MatError::NotSymmetric { max_asymmetry: self.max_asymmetry() });
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let idx = |i: usize, j: usize| i * n + j;
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[idx(i, j)] * a[idx(i, j)];
                }
            }
            if off.sqrt() <= 1e-14 * self.max_abs().max(1.0) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[idx(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[idx(p, p)];
                    let aqq = a[idx(q, q)];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[idx(k, p)];
                        let akq = a[idx(k, q)];
                        a[idx(k, p)] = c * akp - s * akq;
                        a[idx(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[idx(p, k)];
                        let aqk = a[idx(q, k)];
                        a[idx(p, k)] = c * apk - s * aqk;
                        a[idx(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        Ok((0..n).map(|i| a[idx(i, i)]).collect())
    }

    /// Lower-triangular Cholesky factor of a symmetric positive definite
    /// matrix.
    pub fn cholesky(&self) -> Result<Matrix, MatError> {
        self.require_square()?;
        if !self.is_symmetric() {
            return Err(MatError::NotSymmetric { max_asymmetry: self.max_asymmetry() });
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(MatError::Singular);
                    }
                    l.set(i, j, sum.sqrt());
                } else {
                    l.set(i, j, sum / l.get(j, j));
                }
            }
        }
        Ok(l)
    }

    /// Solves `self * X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix, MatError> {
        self.require_square()?;
        if self.rows != rhs.rows {
            return Err(MatError::DimMismatch {
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}x{}", rhs.rows, rhs.cols),
            });
        }
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                return Err(MatError::Singular);
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                for j in 0..m {
                    b.swap(k * m + j, piv * m + j);
                }
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in (k + 1)..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                for j in 0..m {
                    b[i * m + j] -= f * b[k * m + j];
                }
            }
        }
        for k in (0..n).rev() {
            for j in 0..m {
                let mut acc = b[k * m + j];
                for i in (k + 1)..n {
                    acc -= a[k * n + i] * b[i * m + j];
                }
                b[k * m + j] = acc / a[k * n + k];
            }
        }
        Matrix::new(n, m, b)
    }

    fn require_square(&self) -> Result<(), MatError> {
        if !self.is_square() {
            return Err(MatError::NotSquare { rows: self.rows, cols: self.cols });
        }
        Ok(())
    }
}

// Matrices travel through JSON as arrays of row arrays.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> =
            (0..self.rows).map(|i| &self.data[i * self.cols..(i + 1) * self.cols]).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        if rows.is_empty() {
            return Err(D::Error::custom("matrix needs at least one row"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in &rows {
            if r.len() != cols {
                return Err(D::Error::custom("matrix rows have inconsistent lengths"));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data).map_err(D::Error::custom)
    }
}

/// Half-vectorization of a symmetric `g x g` matrix: the `g(g+1)/2` distinct
/// elements in lower-triangular column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct VechVector {
    g: usize,
    data: Vec<f64>,
}

impl VechVector {
    pub fn new(g: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if data.len() != vech_len(g) {
            return Err(MatError::InvalidData { rows: vech_len(g), cols: 1, got: data.len() });
        }
        Ok(Self { g, data })
    }

    pub fn zeros(g: usize) -> Self {
        Self { g, data: vec![0.0; vech_len(g)] }
    }

    #[inline]
    pub fn g(&self) -> usize {
        self.g
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Position of element `(i, j)` of the source matrix inside the vech
    /// vector; arguments may be given in either order.
    pub fn index_of(&self, i: usize, j: usize) -> usize {
        vech_index(self.g, i, j)
    }
}

impl Serialize for VechVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.data.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VechVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let data: Vec<f64> = Vec::deserialize(deserializer)?;
        vech_from_slice(&data).map_err(D::Error::custom)
    }
}

/// Length of vech for a `g x g` matrix.
pub const fn vech_len(g: usize) -> usize {
    g * (g + 1) / 2
}

/// Index of `(i, j)` (with `i >= j` after swapping) in lower-triangular
/// column-major vech order.
pub fn vech_index(g: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    debug_assert!(i < g);
    j * g - j * (j + 1) / 2 + i
}

/// Kronecker product: block `(i, j)` of the result is `a_ij * b`.
///
/// ```
/// use stratalloc::matcalc::{kron, Matrix};
/// let i2 = Matrix::identity(2);
/// assert_eq!(kron(&i2, &i2), Matrix::identity(4));
/// ```
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = (a.rows(), a.cols());
    let (rb, cb) = (b.rows(), b.cols());
    let mut out = Matrix::zeros(ra * rb, ca * cb);
    for ia in 0..ra {
        for ja in 0..ca {
            let v = a.get(ia, ja);
            if v == 0.0 {
                continue;
            }
            for ib in 0..rb {
                for jb in 0..cb {
                    out.set(ia * rb + ib, ja * cb + jb, v * b.get(ib, jb));
                }
            }
        }
    }
    out
}

/// Column-stacking operator: column `j` of `c` occupies positions
/// `j*m .. (j+1)*m` of the result.
pub fn vec_of(c: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(c.rows() * c.cols());
    for j in 0..c.cols() {
        for i in 0..c.rows() {
            out.push(c.get(i, j));
        }
    }
    out
}

/// Half-vectorization of a square matrix (supradiagonal elements dropped).
///
/// ```
/// use stratalloc::matcalc::{vech, Matrix};
/// let b = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 5.0]]);
/// assert_eq!(vech(&b).unwrap().data(), &[1.0, 2.0, 5.0]);
/// ```
pub fn vech(b: &Matrix) -> Result<VechVector, MatError> {
    if !b.is_square() {
        return Err(MatError::NotSquare { rows: b.rows(), cols: b.cols() });
    }
    let g = b.rows();
    let mut data = Vec::with_capacity(vech_len(g));
    for j in 0..g {
        for i in j..g {
            data.push(b.get(i, j));
        }
    }
    Ok(VechVector { g, data })
}

/// Reconstructs the symmetric matrix whose vech is `v`.
pub fn vech_inverse(v: &VechVector) -> Matrix {
    let g = v.g();
    let mut out = Matrix::zeros(g, g);
    let mut k = 0;
    for j in 0..g {
        for i in j..g {
            out.set(i, j, v.data[k]);
            out.set(j, i, v.data[k]);
            k += 1;
        }
    }
    out
}

/// Builds a `VechVector` directly from a slice, inferring `g` from the
/// length.
pub fn vech_from_slice(data: &[f64]) -> Result<VechVector, MatError> {
    let len = data.len();
    let mut g = 0usize;
    while vech_len(g) < len {
        g += 1;
    }
    if vech_len(g) != len {
        return Err(MatError::InvalidVechLength { len });
    }
    Ok(VechVector { g, data: data.to_vec() })
}

/// Commutation matrix `K_mn`: the `mn x mn` permutation with
/// `K_mn * vec(C) = vec(C')` for every `m x n` matrix `C`.
pub fn commutation_matrix(m: usize, n: usize) -> Matrix {
    let mut k = Matrix::zeros(m * n, m * n);
    for i in 0..m {
        for j in 0..n {
            // vec(C) puts (i,j) at j*m + i; vec(C') puts it at i*n + j.
            k.set(i * n + j, j * m + i, 1.0);
        }
    }
    k
}

/// Duplication matrix `D_n`: the `n^2 x n(n+1)/2` matrix with
/// `D_n * vech(B) = vec(B)` for every symmetric `B`.
pub fn duplication_matrix(n: usize) -> Matrix {
    let mut d = Matrix::zeros(n * n, vech_len(n));
    for j in 0..n {
        for i in 0..n {
            d.set(j * n + i, vech_index(n, i, j), 1.0);
        }
    }
    d
}

/// Moore-Penrose inverse of the duplication matrix, via the full-column-rank
/// closed form `(D'D)^{-1} D'`.
pub fn duplication_pinv(n: usize) -> Matrix {
    let d = duplication_matrix(n);
    let dt = d.transpose();
    let dtd = dt.matmul(&d).expect("shape");
    dtd.solve(&dt).expect("D'D is invertible")
}
