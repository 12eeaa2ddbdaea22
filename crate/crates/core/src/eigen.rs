//! Dense symmetric eigensolver and empirical-to-population eigenvalue matching.
//!
//! The solver reduces to tridiagonal form with Householder reflections and
//! then runs the implicit-shift QL iteration. The reduction works on the upper
//! triangle and fuses the rank-2 update of one step with the symmetric
//! matrix-vector product of the next, so each step streams the trailing block
//! through memory once.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::spectrum::RegimeConstants;

/// QL iterations allowed per eigenvalue before giving up.
pub const MAX_QL_SWEEPS: usize = 64;

/// Entrywise symmetry tolerance accepted by [`symmetric_eigen`].
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors; column `j` pairs with `values[j]`.
    pub vectors: Option<Matrix>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, j: usize) -> Option<Vec<f64>> {
        self.vectors.as_ref().map(|v| v.column(j))
    }
}

/// All eigenvalues (descending) and optionally eigenvectors of a symmetric matrix.
pub fn symmetric_eigen(m: &Matrix, want_vectors: bool) -> Result<EigenDecomposition> {
    if let Some((i, j)) = m.asymmetry(SYMMETRY_TOL) {
        return Err(Error::Domain(format!(
            "matrix is not symmetric at ({i}, {j}): {} vs {}",
            m[(i, j)],
            m[(j, i)]
        )));
    }
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let n = m.dim();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            vectors: want_vectors.then(|| Matrix::zeros(0)),
        });
    }

    let mut work = m.clone();
    let mut tri = tridiagonalize(&mut work);
    let mut z = want_vectors.then(|| accumulate_reflectors(&work, &tri.tau).transpose());
    tql(&mut tri.diag, &mut tri.offdiag, z.as_mut())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| tri.diag[b].total_cmp(&tri.diag[a]));
    let values = order.iter().map(|&k| tri.diag[k]).collect();
    // Rows of `z` are eigenvectors; emit them as columns.
    let vectors = z.map(|zt| Matrix::from_fn(n, |i, j| zt[(order[j], i)]));
    Ok(EigenDecomposition { values, vectors })
}

struct Tridiagonal {
    diag: Vec<f64>,
    /// `offdiag[k]` couples `k` and `k + 1`; the last entry is zero.
    offdiag: Vec<f64>,
    /// Reflector scalars; reflector `k` acts on indices `k + 1..n` and its
    /// vector (with implicit leading 1) sits in row `k`, columns `k + 2..n`.
    tau: Vec<f64>,
}

/// Householder reduction `Qᵀ A Q = T` using the upper triangle of `a`.
fn tridiagonalize(a: &mut Matrix) -> Tridiagonal {
    let n = a.dim();
    let mut diag = vec![0.0; n];
    let mut offdiag = vec![0.0; n];
    let mut tau = vec![0.0; n.saturating_sub(1)];

    // Pending rank-2 update `A -= v wᵀ + w vᵀ`, indexed from `base`.
    let mut pending: Option<(usize, Vec<f64>, Vec<f64>)> = None;
    let apply = |row: &mut [f64], i: usize, upd: &Option<(usize, Vec<f64>, Vec<f64>)>| {
        if let Some((base, v, w)) = upd {
            let li = i - base;
            let (vi, wi) = (v[li], w[li]);
            // row holds columns i..n
            for ((a, &vj), &wj) in row.iter_mut().zip(&v[li..]).zip(&w[li..]) {
                *a -= vi * wj + wi * vj;
            }
        }
    };

    for k in 0..n {
        {
            let row = &mut a.row_mut(k)[k..];
            apply(row, k, &pending);
            diag[k] = row[0];
        }
        if k + 1 >= n {
            break;
        }
        let m = n - k - 1;
        // Householder vector from x = A[k, k+1..n].
        let x = &mut a.row_mut(k)[k + 1..];
        let alpha = x[0];
        let xnorm = dot(&x[1..], &x[1..]).sqrt();
        let (t, beta) = if xnorm == 0.0 {
            (0.0, alpha)
        } else {
            let beta = -alpha.signum() * alpha.hypot(xnorm);
            let scale = 1.0 / (alpha - beta);
            for xi in &mut x[1..] {
                *xi *= scale;
            }
            ((beta - alpha) / beta, beta)
        };
        offdiag[k] = beta;
        tau[k] = t;
        let mut v = Vec::with_capacity(m);
        v.push(1.0);
        v.extend_from_slice(&x[1..]);

        // Fused pass: finish the previous update on each trailing row and
        // accumulate p = A22 v from the updated upper triangle.
        let mut p = vec![0.0; m];
        for i in (k + 1)..n {
            let row = &mut a.row_mut(i)[i..];
            apply(row, i, &pending);
            if t != 0.0 {
                let li = i - k - 1;
                let vi = v[li];
                p[li] += row[0] * vi + dot(&row[1..], &v[li + 1..]);
                axpy(vi, &row[1..], &mut p[li + 1..]);
            }
        }
        if t == 0.0 {
            pending = None;
            continue;
        }
        for pi in &mut p {
            *pi *= t;
        }
        let half = 0.5 * t * dot(&p, &v);
        let w: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - half * vi).collect();
        pending = Some((k + 1, v, w));
    }
    Tridiagonal { diag, offdiag, tau }
}

/// Forms `Q = H_0 H_1 ⋯` explicitly by backward accumulation.
fn accumulate_reflectors(a: &Matrix, tau: &[f64]) -> Matrix {
    let n = a.dim();
    let mut q = Matrix::identity(n);
    let mut s = vec![0.0; n];
    for k in (0..tau.len()).rev() {
        let t = tau[k];
        if t == 0.0 {
            continue;
        }
        let lo = k + 1;
        let mut v = vec![1.0];
        v.extend_from_slice(&a.row(k)[k + 2..]);
        // s = vᵀ Q[lo.., lo..]
        let s = &mut s[lo..];
        s.fill(0.0);
        for (li, &vi) in v.iter().enumerate() {
            axpy(vi, &q.row(lo + li)[lo..], s);
        }
        for (li, &vi) in v.iter().enumerate() {
            axpy(-t * vi, s, &mut q.row_mut(lo + li)[lo..]);
        }
    }
    q
}

/// Implicit-shift QL on a symmetric tridiagonal matrix (EISPACK `tql2`).
///
/// On return `d` holds the eigenvalues. When `zt` is given its rows are
/// rotated along, so rows of `Qᵀ` become eigenvectors.
fn tql(d: &mut [f64], e: &mut [f64], mut zt: Option<&mut Matrix>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_SWEEPS {
                    return Err(Error::Numeric(format!(
                        "QL iteration did not converge for eigenvalue {l} after {MAX_QL_SWEEPS} sweeps"
                    )));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = zt.as_deref_mut() {
                        rotate_rows(z, i, c, s);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[inline]
fn rotate_rows(z: &mut Matrix, i: usize, c: f64, s: f64) {
    let n = z.dim();
    let (head, tail) = z.as_mut_slice().split_at_mut((i + 1) * n);
    let ri = &mut head[i * n..];
    let rj = &mut tail[..n];
    for (a, b) in ri.iter_mut().zip(rj.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

/// The empirical eigenvalue matched to a population eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MatchedEigenvalue {
    /// Position in the descending eigenvalue list.
    pub index_in_sorted: usize,
    pub value: f64,
    /// `value / (n − 1)`.
    pub normalized_value: f64,
    /// `|normalized_value − λ_r|`.
    pub distance_to_target: f64,
    /// The match lies within `γ_r / 2` of `λ_r` and every other eigenvalue lies outside.
    pub unambiguous: bool,
}

/// Picks the eigenvalue whose normalized value `λ/(n−1)` is nearest `lambda_r`.
pub fn match_value(
    decomp: &EigenDecomposition,
    lambda_r: f64,
    gap: f64,
    n: usize,
) -> MatchedEigenvalue {
    assert!(
        !decomp.values.is_empty(),
        "cannot match in an empty spectrum"
    );
    let scale = (n as f64 - 1.0).max(1.0);
    let half = 0.5 * gap;
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    let mut inside = 0usize;
    for (k, &v) in decomp.values.iter().enumerate() {
        let dist = (v / scale - lambda_r).abs();
        if dist < half {
            inside += 1;
        }
        if dist < best_dist {
            best_dist = dist;
            best = k;
        }
    }
    let value = decomp.values[best];
    MatchedEigenvalue {
        index_in_sorted: best,
        value,
        normalized_value: value / scale,
        distance_to_target: best_dist,
        unambiguous: best_dist < half && inside == 1,
    }
}

/// [`match_value`] against the target of a set of regime constants.
pub fn match_target(
    decomp: &EigenDecomposition,
    constants: &RegimeConstants,
    n: usize,
) -> MatchedEigenvalue {
    match_value(decomp, constants.lambda_r, constants.gap, n)
}

/// Largest-magnitude eigenvalue estimate by power iteration from a fixed start.
///
/// For symmetric `m` this converges to `‖m‖_op` from below.
pub fn power_norm(m: &Matrix, iterations: usize) -> f64 {
    let n = m.dim();
    if n == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start vector.
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract())
        .collect();
    let mut est = 0.0;
    for _ in 0..iterations {
        let nx = dot(&x, &x).sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = m.matvec(&x);
        est = dot(&y, &y).sqrt();
        x = y;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(n: usize, seed: u64) -> Matrix {
        let mut s = seed;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = next();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn diagonal_values_sorted() {
        let d = symmetric_eigen(&Matrix::diagonal(&[3.0, 1.0, 2.0]), false).unwrap();
        assert_eq!(d.values, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn two_by_two_antidiagonal() {
        let c = 0.7;
        let m = Matrix::from_rows(&[vec![0.0, c], vec![c, 0.0]]).unwrap();
        let d = symmetric_eigen(&m, false).unwrap();
        assert!((d.values[0] - c).abs() < 1e-15);
        assert!((d.values[1] + c).abs() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]).unwrap();
        assert!(matches!(symmetric_eigen(&m, false), Err(Error::Domain(_))));
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        for n in [1, 2, 3, 7, 40, 65] {
            let m = lcg_matrix(n, n as u64);
            let d = symmetric_eigen(&m, true).unwrap();
            let v = d.vectors.as_ref().unwrap();
            let recon = v
                .matmul(&Matrix::diagonal(&d.values))
                .matmul(&v.transpose());
            let err = recon.sub(&m).max_abs();
            assert!(
                err <= 1e-8 * m.max_abs().max(1e-300),
                "n={n} recon err {err}"
            );
            let gram = v.transpose().matmul(v).sub(&Matrix::identity(n)).max_abs();
            assert!(gram <= 1e-8, "n={n} orthogonality err {gram}");
        }
    }

    #[test]
    fn values_only_matches_vector_path() {
        let m = lcg_matrix(50, 9);
        let a = symmetric_eigen(&m, false).unwrap();
        let b = symmetric_eigen(&m, true).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn match_picks_nearest_and_flags_ties() {
        let d = EigenDecomposition {
            values: vec![0.401 * 9.0, 0.199 * 9.0, 0.02 * 9.0],
            vectors: None,
        };
        let m = match_value(&d, 0.2, 0.2, 10);
        assert_eq!(m.index_in_sorted, 1);
        assert!((m.normalized_value - 0.199).abs() < 1e-12);
        assert!(m.unambiguous);

        let tie = EigenDecomposition {
            values: vec![0.3 * 9.0, 0.3 * 9.0],
            vectors: None,
        };
        let m = match_value(&tie, 0.3, 0.2, 10);
        assert!(!m.unambiguous);
        assert!(m.distance_to_target < 1e-12);
    }

    #[test]
    fn power_norm_of_diagonal() {
        let m = Matrix::diagonal(&[0.5, -2.0, 1.0]);
        assert!((power_norm(&m, 200) - 2.0).abs() < 1e-9);
    }
}
