//! Small dense row-major matrix type and the kernels the pipeline needs.
//!
//! Every kernel that matters for the benchmark takes a [`MaddCounter`] so
//! multiply-add counts are measured on the code path that actually runs,
//! rather than estimated from formulas.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running tally of fused multiply-add operations (one multiply plus one add
/// counts as one; a lone multiply or divide also counts as one).
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaddCounter {
    pub madds: u64,
}

impl MaddCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, n: u64) {
        self.madds += n;
    }

    pub fn take(&mut self) -> u64 {
        std::mem::take(&mut self.madds)
    }
}

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
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

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: nrows,
            cols: ncols,
            data,
        }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns<C: AsRef<[f64]>>(cols: &[C]) -> Self {
        let ncols = cols.len();
        let nrows = cols.first().map_or(0, |c| c.as_ref().len());
        let mut m = Self::zeros(nrows, ncols);
        for (j, c) in cols.iter().enumerate() {
            let c = c.as_ref();
            assert_eq!(c.len(), nrows, "ragged columns");
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
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
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    /// Adds `s` to every diagonal entry.
    pub fn add_diagonal(&mut self, s: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += s;
        }
    }

    /// Replaces the matrix with `(M + Mᵀ)/2`.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// Largest `|M - Mᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        self.matmul_counted(other, &mut MaddCounter::new())
    }

    pub fn matmul_counted(&self, other: &Matrix, ops: &mut MaddCounter) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * other.cols..(p + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        ops.add((self.rows * self.cols * other.cols) as u64);
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.matvec_counted(x, &mut MaddCounter::new())
    }

    pub fn matvec_counted(&self, x: &[f64], ops: &mut MaddCounter) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "vector length differs from column count");
        ops.add((self.rows * self.cols) as u64);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `Mᵀ x`.
    pub fn tr_matvec_counted(&self, x: &[f64], ops: &mut MaddCounter) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "vector length differs from row count");
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.row(r)) {
                *o += m * xr;
            }
        }
        ops.add((self.rows * self.cols) as u64);
        out
    }

    /// In-place `M += s · u vᵀ`.
    pub fn rank_one_update(&mut self, s: f64, u: &[f64], v: &[f64], ops: &mut MaddCounter) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let coeff = s * ur;
            if coeff == 0.0 {
                continue;
            }
            for (m, &vc) in self.row_mut(r).iter_mut().zip(v) {
                *m += coeff * vc;
            }
        }
        ops.add((self.rows * self.cols + self.rows) as u64);
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖a − b‖_F / ‖b‖_F`, with the absolute difference returned when `b` is zero.
pub fn relative_frobenius_error(a: &Matrix, b: &Matrix) -> f64 {
    let diff = a.sub(b).frobenius_norm();
    let denom = b.frobenius_norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

/// Relative pivot threshold used by [`direct_inverse`].
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-13;

/// Inverse by in-place Gauss–Jordan elimination with partial (row) pivoting.
///
/// Fails with [`Error::SingularMatrix`] when a pivot falls below
/// `1e-13 · ‖C‖_F`. Costs `n³` multiply-adds.
pub fn direct_inverse(c: &Matrix) -> Result<Matrix> {
    direct_inverse_counted(c, &mut MaddCounter::new())
}

pub fn direct_inverse_counted(c: &Matrix, ops: &mut MaddCounter) -> Result<Matrix> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cannot invert a {}x{} matrix",
            c.rows, c.cols
        )));
    }
    if !c.is_finite() {
        return Err(Error::NonFinite("matrix to invert"));
    }
    let n = c.rows;
    let tol = SINGULAR_PIVOT_RTOL * c.frobenius_norm();
    let mut a = c.clone();
    let mut swaps = Vec::with_capacity(n);

    for p in 0..n {
        let (piv_row, piv_abs) =
            (p..n)
                .map(|r| (r, a[(r, p)].abs()))
                .fold((p, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(piv_abs > tol) || piv_abs == 0.0 {
            return Err(Error::SingularMatrix {
                pivot: piv_abs,
                threshold: tol,
            });
        }
        if piv_row != p {
            for col in 0..n {
                a.data.swap(p * n + col, piv_row * n + col);
            }
        }
        swaps.push(piv_row);

        let inv_piv = 1.0 / a[(p, p)];
        a[(p, p)] = 1.0;
        for v in a.row_mut(p) {
            *v *= inv_piv;
        }
        let pivot_row: Vec<f64> = a.row(p).to_vec();
        for r in 0..n {
            if r == p {
                continue;
            }
            let f = a[(r, p)];
            a[(r, p)] = 0.0;
            if f == 0.0 {
                continue;
            }
            for (v, &pv) in a.row_mut(r).iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        ops.add((n * n) as u64);
    }

    // Undo the row interchanges as column interchanges, in reverse order.
    for p in (0..n).rev() {
        let q = swaps[p];
        if q != p {
            for r in 0..n {
                a.data.swap(r * n + p, r * n + q);
            }
        }
    }
    Ok(a)
}

/// Singular values of a tall `k×3` matrix by one-sided Jacobi rotations,
/// sorted descending.
pub fn singular_values_k3(m: &Matrix) -> [f64; 3] {
    assert_eq!(m.cols(), 3, "expected a k×3 matrix");
    let mut cols: [Vec<f64>; 3] = [m.column(0), m.column(1), m.column(2)];
    for _sweep in 0..60 {
        let mut rotated = false;
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let alpha = dot(&cols[i], &cols[i]);
            let beta = dot(&cols[j], &cols[j]);
            let gamma = dot(&cols[i], &cols[j]);
            if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let t = if zeta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            let (lo, hi) = cols.split_at_mut(j);
            for (a, b) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                let (x, y) = (*a, *b);
                *a = c * x - s * y;
                *b = s * x + c * y;
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv = [norm2(&cols[0]), norm2(&cols[1]), norm2(&cols[2])];
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}
