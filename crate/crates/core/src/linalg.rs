//! Dense row-major matrices and the handful of decompositions the rest of the
//! crate needs.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::par;

/// Off-diagonal Frobenius tolerance of the Jacobi eigensolver, relative to
/// the Frobenius norm of the input.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
/// Maximum number of cyclic Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// A dense `rows x cols` matrix of `f64` stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    /// Builds a matrix from a row-major buffer. Fails on a length mismatch or
    /// on non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals and tests.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        DenseMatrix {
            rows: n,
            cols,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> DenseMatrix {
        assert!(k <= self.cols);
        DenseMatrix::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        let cols = rhs.cols;
        par::for_each_row_mut(&mut out.data, cols, |i, out_row| {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        });
        out
    }

    /// `self * self^T`.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.rows;
        let mut out = DenseMatrix::zeros(n, n);
        par::for_each_row_mut(&mut out.data, n, |i, out_row| {
            let a = self.row(i);
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = dot(a, self.row(j));
            }
        });
        out
    }

    pub fn scaled(&self, c: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn zip_with(&self, rhs: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest `|a_ij - a_ji|`; `f64::INFINITY` for non-square matrices.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl AsRef<DenseMatrix> for DenseMatrix {
    fn as_ref(&self) -> &DenseMatrix {
        self
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigResult {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors; column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DenseMatrix,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues are sorted in descending order. Each eigenvector is signed so
/// that its largest-magnitude component is positive, the first such
/// component winning ties.
pub fn sym_eig(a: &DenseMatrix) -> Result<SymEigResult> {
    if !a.is_square() {
        return Err(Error::Contract(format!(
            "sym_eig needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::Contract(
            "sym_eig input has non-finite entries".into(),
        ));
    }
    let scale = a.max_abs();
    if a.asymmetry() > 1e-10 * scale {
        return Err(Error::Contract(format!(
            "sym_eig input is not symmetric (max asymmetry {:e})",
            a.asymmetry()
        )));
    }

    let n = a.rows();
    let mut m = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = DenseMatrix::identity(n);
    let threshold = JACOBI_TOLERANCE * m.frobenius_norm();

    let mut converged = off_diagonal_norm(&m) <= threshold;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Skip rotations that cannot change either diagonal entry.
                if apq.abs() < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
        converged = off_diagonal_norm(&m) <= threshold;
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps,
            residual: off_diagonal_norm(&m),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| m[(k, k)]).collect();
    let mut eigenvectors = DenseMatrix::from_fn(n, n, |i, c| v[(i, order[c])]);
    for c in 0..n {
        normalize_sign(&mut eigenvectors, c);
    }
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

fn rotate(m: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

fn off_diagonal_norm(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
    }
    acc.sqrt()
}

/// Flips column `c` so that its largest-magnitude entry is positive. Entries
/// within a relative 1e-10 of the maximum count as tied and the lowest index
/// wins.
pub fn normalize_sign(m: &mut DenseMatrix, c: usize) {
    let n = m.rows();
    let max = (0..n).fold(0.0_f64, |acc, i| acc.max(m[(i, c)].abs()));
    if max == 0.0 {
        return;
    }
    let lead = (0..n)
        .find(|&i| m[(i, c)].abs() >= max * (1.0 - 1e-10))
        .unwrap_or(0);
    if m[(lead, c)] < 0.0 {
        for i in 0..n {
            m[(i, c)] = -m[(i, c)];
        }
    }
}

/// Subtracts each column's mean.
pub fn center_columns(x: &DenseMatrix) -> DenseMatrix {
    let (n, p) = x.shape();
    if n == 0 {
        return x.clone();
    }
    let mut means = vec![0.0; p];
    for i in 0..n {
        for (m, v) in means.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    DenseMatrix::from_fn(n, p, |i, j| x[(i, j)] - means[j])
}

/// Squared Euclidean distances between all pairs of rows. The diagonal is
/// exactly zero and the result is exactly symmetric.
pub fn pairwise_sq_dists(x: &DenseMatrix) -> DenseMatrix {
    let n = x.rows();
    let mut out = DenseMatrix::zeros(n, n);
    par::for_each_row_mut(&mut out.data, n, |i, row| {
        let xi = x.row(i);
        for (j, d) in row.iter_mut().enumerate() {
            if j != i {
                *d = sq_dist(xi, x.row(j));
            }
        }
    });
    out
}

/// Cholesky factorization of a symmetric positive-definite matrix, returning
/// the inverse and the log-determinant.
pub fn spd_inverse_logdet(a: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    if !a.is_square() {
        return Err(Error::Contract(
            "spd_inverse_logdet needs a square matrix".into(),
        ));
    }
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Contract("matrix is not positive definite".into()));
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();

    // Invert L by forward substitution, then A^-1 = L^-T L^-1.
    let mut linv = DenseMatrix::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                s -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = s / l[(i, i)];
        }
    }
    let inv = linv.transpose().matmul(&linv);
    Ok((inv, logdet))
}
