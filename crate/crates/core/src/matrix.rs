//! Dense square matrices in row-major storage.
//!
//! Only what the spectral pipeline needs: construction, products with
//! vectors, a few norms, and a pivoted LU solve.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Matrix { n, data }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parameter("matrix rows must form a square".into()));
        }
        Ok(Matrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Parameter(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Matrix { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
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

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "dimension mismatch in matvec");
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "dimension mismatch in matmul");
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            let row = self.row(i);
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    /// Largest absolute row sum, an upper bound on the operator norm of a
    /// symmetric matrix.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|a| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// First `(i, j)` with `|M_ij − M_ji| > tol`, if any.
    pub fn asymmetry(&self, tol: f64) -> Option<(usize, usize)> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self[(i, j)] - self[(j, i)]).abs() > tol || self[(i, j)].is_nan() {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Symmetric permutation `P M Pᵀ` with `out[i][j] = M[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Matrix {
        assert_eq!(perm.len(), self.n);
        Matrix::from_fn(self.n, |i, j| self[(perm[i], perm[j])])
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += a x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Result of [`lu_solve`]: the solution and the smallest pivot magnitude
/// encountered, a cheap conditioning proxy.
#[derive(Clone, Debug)]
pub struct LuSolution {
    pub x: Vec<f64>,
    pub min_pivot: f64,
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
///
/// Consumes `a`; fails only on an exactly zero pivot.
pub fn lu_solve(mut a: Matrix, b: &[f64]) -> Result<LuSolution> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::Parameter("right-hand side length mismatch".into()));
    }
    let mut x = b.to_vec();
    let mut min_pivot = f64::INFINITY;
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, a[(i, k)].abs()))
            .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if pmax == 0.0 || !pmax.is_finite() {
            return Err(Error::Numeric(format!("singular pivot at column {k}")));
        }
        min_pivot = min_pivot.min(pmax);
        if p != k {
            for j in 0..n {
                a.data.swap(k * n + j, p * n + j);
            }
            x.swap(k, p);
        }
        let (upper, lower) = a.data.split_at_mut((k + 1) * n);
        let pivot_row = &upper[k * n + k..(k + 1) * n];
        let pivot = pivot_row[0];
        for i in (k + 1)..n {
            let row = &mut lower[(i - k - 1) * n + k..(i - k) * n];
            let factor = row[0] / pivot;
            if factor != 0.0 {
                axpy(-factor, &pivot_row[1..], &mut row[1..]);
                x[i] -= factor * x[k];
            }
            row[0] = 0.0;
        }
    }
    for k in (0..n).rev() {
        let row = a.row(k);
        let s = dot(&row[k + 1..], &x[k + 1..]);
        x[k] = (x[k] - s) / row[k];
    }
    Ok(LuSolution { x, min_pivot })
}
