//! Executable versions of the perturbation and U-statistic arguments:
//! Rayleigh quotients, the Hoeffding decomposition of the centered quotient,
//! cross-projections, Kato–Temple bounds, the second-order expansion
//! remainder and the resolvent correction.

use serde::Serialize;

use crate::eigen::{power_norm, symmetric_eigen};
use crate::error::{Error, Result};
use crate::matrix::{dot, lu_solve, norm2, Matrix};
use crate::sample::kernel_matrix;
use crate::spectrum::SpectralData;

/// Power iterations used to estimate `‖E‖_op`.
pub const POWER_ITERATIONS: usize = 50;
/// Inflation applied to the power-iteration norm estimate before comparing with the gap.
pub const NORM_SAFETY: f64 = 1.01;
/// Pivots of the shifted block below `RESOLVENT_PIVOT_TOL · n` count as singular.
pub const RESOLVENT_PIVOT_TOL: f64 = 1e-8;

/// Terms of `(1/(n(n−1))) Σ_{i≠j} h_r(U_i, U_j) = θ + linear + degenerate`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoeffdingParts {
    pub theta: f64,
    /// `2 λ_r V_rn`.
    pub linear: f64,
    /// `U_n^{(2)}`, the degenerate second-order U-statistic, summed directly.
    pub degenerate: f64,
    /// `(1/n) Σ (φ_r(U_i)² − 1)`.
    pub v_rn: f64,
    /// `Σ φ_r(U_i)²`.
    pub s_rn: f64,
    /// The left-hand side, `(1/(n(n−1))) Σ_{i≠j} φ_r(U_i) W(U_i,U_j) φ_r(U_j)`.
    pub total: f64,
}

impl HoeffdingParts {
    /// `|total − (θ + linear + degenerate)| / max(|total|, 1)`.
    pub fn reconstruction_error(&self) -> f64 {
        (self.total - (self.theta + self.linear + self.degenerate)).abs()
            / self.total.abs().max(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossProjections {
    /// One-based mode indices `k ≠ r`.
    pub modes: Vec<usize>,
    /// `T_k = n^{-1/2} Σ_i φ_r(U_i) φ_k(U_i)`, aligned with `modes`.
    pub values: Vec<f64>,
    pub modes_used: usize,
}

/// `φ / ‖φ‖` together with `s = ‖φ‖²`.
pub fn unit_vector(phi: &[f64]) -> Result<(Vec<f64>, f64)> {
    let s = dot(phi, phi);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain("eigenfunction vector is zero".into()));
    }
    let norm = s.sqrt();
    Ok((phi.iter().map(|p| p / norm).collect(), s))
}

/// `uᵀ K u` with `u = φ / ‖φ‖`, i.e. `(1/s_rn) Σ_{i≠j} φ_i K_ij φ_j`.
pub fn rayleigh_quotient(k: &Matrix, phi: &[f64]) -> Result<f64> {
    if phi.len() != k.dim() {
        return Err(Error::Parameter(format!(
            "eigenfunction vector has length {}, matrix has dimension {}",
            phi.len(),
            k.dim()
        )));
    }
    let (u, _) = unit_vector(phi)?;
    Ok(k.quadratic_form(&u))
}

/// Hoeffding decomposition of the U-statistic with kernel
/// `h_r(x,y) = φ_r(x) W(x,y) φ_r(y)` at the given latents.
pub fn hoeffding_decompose(
    spec: &SpectralData,
    r: usize,
    latents: &[f64],
) -> Result<HoeffdingParts> {
    let idx = mode_index(spec, r)?;
    let kernel = kernel_matrix(spec.model(), latents)?;
    let phi = spec.phi_values(idx, latents);
    hoeffding_from_kernel(&kernel, &phi, spec.eigenvalues[idx])
}

/// [`hoeffding_decompose`] from an already assembled `K_n` and `φ_r(U_i)`.
///
/// With `θ = λ_r` and `h_1(x) = λ_r(φ_r(x)² − 1)`, the second-order kernel is
/// `h_2(x,y) = h_r(x,y) − h_1(x) − h_1(y) − θ`; its average is accumulated
/// entry by entry rather than by subtraction.
pub fn hoeffding_from_kernel(
    kernel: &Matrix,
    phi: &[f64],
    lambda_r: f64,
) -> Result<HoeffdingParts> {
    let n = kernel.dim();
    if phi.len() != n || n < 2 {
        return Err(Error::Parameter(
            "Hoeffding decomposition needs n ≥ 2 matching values".into(),
        ));
    }
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);
    let h1: Vec<f64> = phi.iter().map(|p| lambda_r * (p * p - 1.0)).collect();
    let mut total = 0.0;
    let mut second = 0.0;
    for i in 0..n {
        let row = kernel.row(i);
        let (mut t, mut d) = (0.0, 0.0);
        for j in 0..n {
            if j != i {
                let h = phi[i] * row[j] * phi[j];
                t += h;
                d += h - h1[i] - h1[j] - lambda_r;
            }
        }
        total += t;
        second += d;
    }
    let s_rn = dot(phi, phi);
    let v_rn = h1.iter().sum::<f64>() / (lambda_r * nf);
    Ok(HoeffdingParts {
        theta: lambda_r,
        linear: 2.0 * lambda_r * v_rn,
        degenerate: second / pairs,
        v_rn,
        s_rn,
        total: total / pairs,
    })
}

/// `T_k` for every retained `k ≤ modes`, `k ≠ r` (all one-based).
pub fn cross_projections(
    spec: &SpectralData,
    r: usize,
    latents: &[f64],
    modes: usize,
) -> Result<CrossProjections> {
    let idx = mode_index(spec, r)?;
    if modes > spec.num_modes() {
        return Err(Error::Parameter(format!(
            "requested {modes} modes but only {} are retained",
            spec.num_modes()
        )));
    }
    let phi_r = spec.phi_values(idx, latents);
    let scale = (latents.len() as f64).sqrt();
    let mut out = CrossProjections {
        modes: Vec::new(),
        values: Vec::new(),
        modes_used: modes,
    };
    for k in (0..modes).filter(|&k| k != idx) {
        let phi_k = spec.phi_values(k, latents);
        out.modes.push(k + 1);
        out.values.push(dot(&phi_r, &phi_k) / scale);
    }
    Ok(out)
}

/// Both sides of the finite-rank identity
/// `(1/n) Σ_{i≠j} h_{r,2}(U_i,U_j) = Σ_{k≠r} λ_k (T_k² − (1/n) Σ_i φ_k(U_i)²)`,
/// valid when `φ_r² ≡ 1` and the retained modes span the kernel.
pub fn degenerate_identity(spec: &SpectralData, r: usize, latents: &[f64]) -> Result<(f64, f64)> {
    let parts = hoeffding_decompose(spec, r, latents)?;
    let t = cross_projections(spec, r, latents, spec.num_modes())?;
    let n = latents.len() as f64;
    Ok((
        (n - 1.0) * parts.degenerate,
        finite_rank_rhs(spec, &t, latents),
    ))
}

/// Right-hand side of [`degenerate_identity`] from precomputed cross-projections.
pub fn finite_rank_rhs(spec: &SpectralData, t: &CrossProjections, latents: &[f64]) -> f64 {
    let n = latents.len() as f64;
    t.modes
        .iter()
        .zip(&t.values)
        .map(|(&k, &tk)| {
            let phi_k = spec.phi_values(k - 1, latents);
            spec.eigenvalues[k - 1] * (tk * tk - dot(&phi_k, &phi_k) / n)
        })
        .sum()
}

/// Outcome of the normalization expansion check
/// `|1/s − (1/n)(1 − V)| ≤ V² / (n (1 − |V|))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormalizationCheck {
    pub deviation: f64,
    pub bound: f64,
    /// Floating-point error allowance for evaluating `deviation` and summing `s`.
    pub rounding: f64,
}

impl NormalizationCheck {
    pub fn holds(&self) -> bool {
        self.deviation <= self.bound * (1.0 + 1e-9) + self.rounding
    }
}

/// Evaluates the expansion of `1/s_rn`; `None` when `|V_rn| ≥ 1/2`.
pub fn normalization_expansion(s_rn: f64, v_rn: f64, n: usize) -> Option<NormalizationCheck> {
    if v_rn.abs() >= 0.5 {
        return None;
    }
    let nf = n as f64;
    Some(NormalizationCheck {
        deviation: (1.0 / s_rn - (1.0 - v_rn) / nf).abs(),
        bound: v_rn * v_rn / (nf * (1.0 - v_rn.abs())),
        rounding: (nf + 4.0) * f64::EPSILON * (1.0 / s_rn + 1.0 / nf),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KatoTemple {
    pub lower: f64,
    pub upper: f64,
    /// Rayleigh quotient `uᵀMu`.
    pub eta: f64,
    pub residual_norm: f64,
    /// Floating-point allowance `n ε ‖M‖_∞` for the computed eigenvalue.
    pub rounding: f64,
}

impl KatoTemple {
    /// `lower − rounding ≤ x ≤ upper + rounding`.
    pub fn contains(&self, x: f64) -> bool {
        self.lower - self.rounding <= x && x <= self.upper + self.rounding
    }
}

/// Kato–Temple enclosure for the single eigenvalue of `m` in `(alpha, beta)`:
/// `η − ‖r‖²/(β − η) ≤ λ ≤ η + ‖r‖²/(η − α)`.
///
/// The caller must confirm that `(alpha, beta)` holds exactly one eigenvalue.
pub fn kato_temple_interval(m: &Matrix, u: &[f64], alpha: f64, beta: f64) -> Result<KatoTemple> {
    if u.len() != m.dim() {
        return Err(Error::Parameter(
            "vector length does not match matrix".into(),
        ));
    }
    if (norm2(u) - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!("‖u‖ = {} is not 1", norm2(u))));
    }
    let mu = m.matvec(u);
    let eta = dot(u, &mu);
    if !(alpha < eta && eta < beta) {
        return Err(Error::Precondition(format!(
            "Rayleigh quotient {eta} outside the window ({alpha}, {beta})"
        )));
    }
    let residual: Vec<f64> = mu.iter().zip(u).map(|(a, b)| a - eta * b).collect();
    let rr = dot(&residual, &residual);
    Ok(KatoTemple {
        lower: eta - rr / (beta - eta),
        upper: eta + rr / (eta - alpha),
        eta,
        residual_norm: rr.sqrt(),
        rounding: m.dim() as f64 * f64::EPSILON * m.max_row_sum(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpansionRemainder {
    /// `u_rᵀ E u_r`.
    pub first_order: f64,
    /// `λ_r(M+E) − λ_r(M) − u_rᵀ E u_r`.
    pub remainder: f64,
    /// `2 ‖E‖_op² / γ_r` with the norm estimated by power iteration.
    pub bound: f64,
}

/// First-order term and remainder of the eigenvalue expansion of `M + E` at
/// the `r`-th largest (one-based) eigenvalue of `M`.
pub fn expansion_remainder(m: &Matrix, e: &Matrix, r: usize) -> Result<ExpansionRemainder> {
    let n = m.dim();
    if e.dim() != n {
        return Err(Error::Parameter("perturbation dimension mismatch".into()));
    }
    if r == 0 || r > n {
        return Err(Error::Parameter(format!("index r = {r} outside 1..={n}")));
    }
    let base = symmetric_eigen(m, true)?;
    let idx = r - 1;
    let lambda = base.values[idx];
    let gap = base
        .values
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != idx)
        .map(|(_, v)| (v - lambda).abs())
        .fold(f64::INFINITY, f64::min);
    if !(gap > 0.0) {
        return Err(Error::Precondition(format!("eigenvalue {r} is not simple")));
    }
    let e_norm = NORM_SAFETY * power_norm(e, POWER_ITERATIONS);
    if e_norm >= gap / 2.0 {
        return Err(Error::Precondition(format!(
            "‖E‖ ≈ {e_norm} is not below half the gap {gap}"
        )));
    }
    let u = base.vector(idx).expect("vectors requested");
    let first_order = e.quadratic_form(&u);
    let perturbed = symmetric_eigen(&m.add(e), false)?;
    Ok(ExpansionRemainder {
        first_order,
        remainder: perturbed.values[idx] - lambda - first_order,
        bound: 2.0 * e_norm * e_norm / gap,
    })
}

/// `uᵀKV ((n−1)λ_r I − VᵀKV)⁻¹ VᵀKu`, where the columns of `V` complete the
/// unit vector `u` to an orthonormal basis.
///
/// `V` comes from the Householder reflector `H` with `Hu = ±e₁`, so `VᵀKV`
/// and `VᵀKu` are blocks of `HKH`, formed with two rank-one updates.
pub fn resolvent_correction(k: &Matrix, u: &[f64], lambda_r: f64, n: usize) -> Result<f64> {
    let dim = k.dim();
    if u.len() != dim || dim < 2 {
        return Err(Error::Parameter(
            "resolvent correction needs matching dimensions ≥ 2".into(),
        ));
    }
    if (norm2(u) - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!("‖u‖ = {} is not 1", norm2(u))));
    }
    let hkh = reflect_both_sides(k, u);
    let b: Vec<f64> = (1..dim).map(|i| hkh[(i, 0)]).collect();
    let shift = (n as f64 - 1.0) * lambda_r;
    let mut block = Matrix::zeros(dim - 1);
    for i in 1..dim {
        let src = &hkh.row(i)[1..];
        let dst = block.row_mut(i - 1);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = -s;
        }
        dst[i - 1] += shift;
    }
    let sol = lu_solve(block, &b)?;
    if sol.min_pivot <= RESOLVENT_PIVOT_TOL * n as f64 {
        return Err(Error::Numeric(format!(
            "shifted block is near singular (min pivot {:e})",
            sol.min_pivot
        )));
    }
    Ok(dot(&b, &sol.x))
}

/// `H K H` for the reflector `H = I − τwwᵀ` mapping `u` to a multiple of `e₁`.
fn reflect_both_sides(k: &Matrix, u: &[f64]) -> Matrix {
    let mut w = u.to_vec();
    let alpha = if u[0] >= 0.0 { -1.0 } else { 1.0 };
    w[0] -= alpha;
    let ww = dot(&w, &w);
    let mut out = k.clone();
    if ww == 0.0 {
        return out;
    }
    let tau = 2.0 / ww;
    let p: Vec<f64> = k.matvec(&w).into_iter().map(|x| tau * x).collect();
    let c = 0.5 * tau * dot(&p, &w);
    let q: Vec<f64> = p.iter().zip(&w).map(|(pi, wi)| pi - c * wi).collect();
    let dim = k.dim();
    for i in 0..dim {
        let row = out.row_mut(i);
        let (wi, qi) = (w[i], q[i]);
        for j in 0..dim {
            row[j] -= wi * q[j] + qi * w[j];
        }
    }
    out
}

fn mode_index(spec: &SpectralData, r: usize) -> Result<usize> {
    if r == 0 || r > spec.num_modes() {
        return Err(Error::Parameter(format!(
            "target index r = {r} outside 1..={}",
            spec.num_modes()
        )));
    }
    Ok(r - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::{BlockModel, GraphonModel};
    use crate::spectrum::analytic_spectrum;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rayleigh_constant_kernel() {
        let m = GraphonModel::Block(BlockModel::constant(0.3));
        let k = kernel_matrix(&m, &[0.1, 0.4, 0.6, 0.9]).unwrap();
        assert!(close(rayleigh_quotient(&k, &[1.0; 4]).unwrap(), 0.9, 1e-15));
        assert!(matches!(
            rayleigh_quotient(&k, &[0.0; 4]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn constant_kernel_has_no_fluctuation_terms() {
        let m = GraphonModel::Block(BlockModel::constant(0.3));
        let spec = analytic_spectrum(&m).unwrap();
        let parts = hoeffding_decompose(&spec, 1, &[0.1, 0.4, 0.6, 0.9, 0.95]).unwrap();
        assert!(close(parts.theta, 0.3, 1e-15));
        assert!(parts.linear.abs() < 1e-15);
        assert!(parts.degenerate.abs() < 1e-15);
    }

    #[test]
    fn kato_temple_exact_eigenvector() {
        let m = Matrix::diagonal(&[2.0, 1.0]);
        let kt = kato_temple_interval(&m, &[1.0, 0.0], 1.5, 3.0).unwrap();
        assert_eq!((kt.lower, kt.upper, kt.residual_norm), (2.0, 2.0, 0.0));
        assert!(kt.contains(2.0 + 1e-16) && !kt.contains(2.0 + 1e-12));
    }

    #[test]
    fn kato_temple_balanced_block_kernel() {
        // balanced two-block kernel: the block sign vector is an exact eigenvector
        let n = 400;
        let sign = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
        let k = Matrix::from_fn(n, |i, j| {
            if i == j {
                0.0
            } else {
                0.4 + 0.2 * sign(i) * sign(j)
            }
        });
        let u: Vec<f64> = (0..n).map(|i| sign(i) / (n as f64).sqrt()).collect();
        let target = 0.2 * n as f64 - 0.6;
        let kt = kato_temple_interval(&k, &u, target - 20.0, target + 20.0).unwrap();
        let eig = symmetric_eigen(&k, false).unwrap();
        let inside: Vec<f64> = eig
            .values
            .iter()
            .copied()
            .filter(|v| (v - target).abs() < 20.0)
            .collect();
        assert_eq!(inside.len(), 1);
        assert!(kt.contains(inside[0]));
        assert!(kt.rounding < 1e-10);
    }

    #[test]
    fn kato_temple_rotated_vector() {
        let m = Matrix::diagonal(&[1.0, 0.0]);
        let t: f64 = 0.1;
        let kt = kato_temple_interval(&m, &[t.cos(), t.sin()], 0.5, 1.5).unwrap();
        assert!(kt.contains(1.0));
        assert!(close(kt.eta, t.cos().powi(2), 1e-15));
    }

    #[test]
    fn kato_temple_far_lower_window() {
        // diag(0, 3) with the window (−10, 1.5): the enclosure must reach
        // down to 0 even though η sits near the upper end.
        let m = Matrix::diagonal(&[0.0, 3.0]);
        let u = [0.7f64.sqrt(), 0.3f64.sqrt()];
        let kt = kato_temple_interval(&m, &u, -10.0, 1.5).unwrap();
        assert!(kt.contains(0.0), "{kt:?}");
        let pinned_to_alpha = kt.eta - kt.residual_norm.powi(2) / (kt.eta + 10.0);
        assert!(pinned_to_alpha > 0.0);
    }

    #[test]
    fn kato_temple_precondition() {
        let m = Matrix::diagonal(&[1.0, 0.0]);
        assert!(matches!(
            kato_temple_interval(&m, &[1.0, 0.0], 1.5, 2.0),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            kato_temple_interval(&m, &[1.0, 1.0], 0.0, 2.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn expansion_trivial_perturbations() {
        let m = Matrix::diagonal(&[3.0, 1.0, -1.0]);
        let zero = expansion_remainder(&m, &Matrix::zeros(3), 2).unwrap();
        assert_eq!((zero.first_order, zero.remainder), (0.0, 0.0));
        let shift = expansion_remainder(&m, &Matrix::identity(3).scaled(0.3), 2).unwrap();
        assert!(close(shift.first_order, 0.3, 1e-14));
        assert!(shift.remainder.abs() < 1e-14);
    }

    #[test]
    fn expansion_rejects_large_perturbation() {
        let m = Matrix::diagonal(&[3.0, 1.0, -1.0]);
        let e = Matrix::identity(3).scaled(1.5);
        assert!(matches!(
            expansion_remainder(&m, &e, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn resolvent_vanishes_on_eigenvectors() {
        let k = Matrix::from_rows(&[
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        let u = [1.0 / 3f64.sqrt(); 3];
        let c = resolvent_correction(&k, &u, 1.0, 3).unwrap();
        assert!(c.abs() < 1e-14);
    }

    #[test]
    fn reflector_maps_u_to_axis() {
        let u = [0.6, 0.0, 0.8];
        let h = reflect_both_sides(&Matrix::identity(3), &u);
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(h[(i, j)], if i == j { 1.0 } else { 0.0 }, 1e-15));
            }
        }
    }

    #[test]
    fn normalization_check_cases() {
        assert!(normalization_expansion(100.0, 0.6, 100).is_none());
        let c = normalization_expansion(90.0, -0.1, 100).unwrap();
        assert!(c.holds());
        assert!(close(c.deviation, c.bound, 1e-15));
        let c = normalization_expansion(110.0, 0.1, 100).unwrap();
        assert!(c.holds() && c.deviation < c.bound);
    }

    #[test]
    fn cross_projections_exclude_target() {
        let spec =
            analytic_spectrum(&GraphonModel::Block(BlockModel::symmetric(0.6, 0.2))).unwrap();
        let t = cross_projections(&spec, 2, &[0.1, 0.2, 0.7], 2).unwrap();
        assert_eq!(t.modes, vec![1]);
        assert!(cross_projections(&spec, 2, &[0.1], 3).is_err());
    }
}
