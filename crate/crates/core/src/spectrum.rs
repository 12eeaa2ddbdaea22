//! Population spectral data of the integral operator `(T_W f)(x) = ∫ W(x,y) f(y) dy`.
//!
//! Finite-rank presets (block models, the power kernel) have closed-form
//! eigenpairs. Everything else goes through a midpoint Nyström discretization.
//! Eigenfunctions are normalized so that `E[φ_k(U)²] = 1` for `U ~ Unif[0,1]`
//! and signed so that their first non-negligible value (scanning from `x = 0`)
//! is positive.

use serde::Serialize;

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::graphon::{block_index, BlockModel, GraphonModel};
use crate::matrix::Matrix;

/// `σ_r²` below this classifies the target eigenvalue as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Smallest admissible eigengap at the target.
pub const MIN_GAP: f64 = 1e-10;

/// Eigenvalues whose magnitudes differ by less than this (with opposite
/// signs) have no well-defined order.
pub const ORDER_TIE_TOL: f64 = 1e-12;

/// Values below this magnitude are ignored by the sign convention.
const SIGN_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Nystrom { m: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Eigenfunction {
    /// Constant on the intervals ending at `breakpoints`, with interval
    /// lengths `weights`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        weights: Vec<f64>,
        values: Vec<f64>,
    },
    /// `√(2α+1) · x^α`.
    Power { alpha: f64 },
    /// Values at the midpoint nodes `(i + ½)/m`; off-node evaluation uses the
    /// Nyström extension.
    Nodal { values: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct SpectralData {
    model: GraphonModel,
    /// Ordered by decreasing `|λ|`.
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Eigenfunction>,
    pub provenance: Provenance,
    /// True when every eigenvalue not listed is exactly zero.
    pub rank_exact: bool,
    /// `Σ λ_k²` over eigenvalues that were computed but not retained.
    pub unretained_sq_mass: f64,
}

impl SpectralData {
    pub fn model(&self) -> &GraphonModel {
        &self.model
    }

    pub fn num_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `φ_k(x)` for a zero-based mode index.
    pub fn phi(&self, k: usize, x: f64) -> f64 {
        match &self.eigenfunctions[k] {
            Eigenfunction::PiecewiseConstant {
                breakpoints,
                values,
                ..
            } => values[block_index(breakpoints, x)],
            Eigenfunction::Power { alpha } => (2.0 * alpha + 1.0).sqrt() * x.powf(*alpha),
            Eigenfunction::Nodal { values } => {
                let m = values.len();
                let w = self.model.evaluator();
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| w(x, node(j, m)) * v)
                    .sum();
                s / (self.eigenvalues[k] * m as f64)
            }
        }
    }

    /// `φ_k` evaluated at every point of `xs`.
    pub fn phi_values(&self, k: usize, xs: &[f64]) -> Vec<f64> {
        match &self.eigenfunctions[k] {
            Eigenfunction::PiecewiseConstant {
                breakpoints,
                values,
                ..
            } => xs
                .iter()
                .map(|&x| values[block_index(breakpoints, x)])
                .collect(),
            _ => xs.iter().map(|&x| self.phi(k, x)).collect(),
        }
    }

    /// `E[φ_j(U) φ_k(U)]` by the rule native to the representation: exact
    /// cell sums, closed forms, or the midpoint rule on the Nyström nodes.
    pub fn inner_product(&self, j: usize, k: usize) -> f64 {
        match (&self.eigenfunctions[j], &self.eigenfunctions[k]) {
            (
                Eigenfunction::PiecewiseConstant {
                    weights, values: a, ..
                },
                Eigenfunction::PiecewiseConstant { values: b, .. },
            ) => weights
                .iter()
                .zip(a)
                .zip(b)
                .map(|((w, x), y)| w * x * y)
                .sum(),
            (Eigenfunction::Power { .. }, Eigenfunction::Power { .. }) => 1.0,
            (Eigenfunction::Nodal { values: a }, Eigenfunction::Nodal { values: b }) => {
                a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
            }
            _ => unreachable!("mixed eigenfunction representations"),
        }
    }

    /// `E[φ_k(U)⁴]`.
    pub fn fourth_moment(&self, k: usize) -> f64 {
        match &self.eigenfunctions[k] {
            Eigenfunction::PiecewiseConstant {
                weights, values, ..
            } => weights.iter().zip(values).map(|(w, v)| w * v.powi(4)).sum(),
            Eigenfunction::Power { alpha } => (2.0 * alpha + 1.0).powi(2) / (4.0 * alpha + 1.0),
            Eigenfunction::Nodal { values } => {
                values.iter().map(|v| v.powi(4)).sum::<f64>() / values.len() as f64
            }
        }
    }

    /// `Var(φ_k(U)²)`.
    pub fn sigma_sq(&self, k: usize) -> f64 {
        let second = self.inner_product(k, k);
        (self.fourth_moment(k) - second * second).max(0.0)
    }

    /// `‖T_W φ_k − λ_k φ_k‖` in `L²`, computed exactly for block
    /// eigenfunctions and on the nodes for Nyström eigenfunctions.
    /// Returns `None` for closed-form eigenfunctions, whose residual is zero
    /// by construction.
    pub fn residual_norm(&self, k: usize) -> Option<f64> {
        let lambda = self.eigenvalues[k];
        match (&self.eigenfunctions[k], &self.model) {
            (
                Eigenfunction::PiecewiseConstant {
                    weights, values, ..
                },
                GraphonModel::Block(b),
            ) => {
                let blocks = weights.len();
                let mut sq = 0.0;
                for a in 0..blocks {
                    let t: f64 = (0..blocks)
                        .map(|c| b.connectivity[a][c] * weights[c] * values[c])
                        .sum();
                    sq += weights[a] * (t - lambda * values[a]).powi(2);
                }
                Some(sq.sqrt())
            }
            (Eigenfunction::Nodal { values }, model) => {
                let m = values.len();
                let w = model.evaluator();
                let mut sq = 0.0;
                for i in 0..m {
                    let xi = node(i, m);
                    let t: f64 =
                        (0..m).map(|j| w(xi, node(j, m)) * values[j]).sum::<f64>() / m as f64;
                    sq += (t - lambda * values[i]).powi(2);
                }
                Some((sq / m as f64).sqrt())
            }
            _ => None,
        }
    }
}

#[inline]
fn node(i: usize, m: usize) -> f64 {
    (i as f64 + 0.5) / m as f64
}

/// Closed-form spectrum of a block model or power kernel.
pub fn analytic_spectrum(model: &GraphonModel) -> Result<SpectralData> {
    match model {
        GraphonModel::Block(b) => block_spectrum(model, b),
        GraphonModel::PowerKernel { alpha } => Ok(SpectralData {
            model: model.clone(),
            eigenvalues: vec![1.0 / (2.0 * alpha + 1.0)],
            eigenfunctions: vec![Eigenfunction::Power { alpha: *alpha }],
            provenance: Provenance::Analytic,
            rank_exact: true,
            unretained_sq_mass: 0.0,
        }),
        other => Err(Error::UnsupportedModel(format!(
            "{} has no finite-rank closed form; use the Nyström spectrum",
            other.name()
        ))),
    }
}

fn block_spectrum(model: &GraphonModel, b: &BlockModel) -> Result<SpectralData> {
    let nb = b.num_blocks();
    let weights = b.proportions.clone();
    // Symmetrized block operator D^{1/2} P D^{1/2}; similar to M_ab = P_ab π_b.
    let root: Vec<f64> = weights.iter().map(|p| p.max(0.0).sqrt()).collect();
    let s = Matrix::from_fn(nb, |a, c| root[a] * b.connectivity[a][c] * root[c]);
    let dec = symmetric_eigen(&s, true)?;
    let vecs = dec.vectors.expect("vectors requested");
    let scale = dec.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let breakpoints = b.breakpoints();
    let mut modes: Vec<(f64, Vec<f64>)> = Vec::new();
    for (j, &lambda) in dec.values.iter().enumerate() {
        if lambda.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            continue;
        }
        let mut values: Vec<f64> = (0..nb)
            .map(|a| {
                if root[a] > 0.0 {
                    vecs[(a, j)] / root[a]
                } else {
                    0.0
                }
            })
            .collect();
        let first = values
            .iter()
            .zip(&weights)
            .find(|(v, w)| **w > 0.0 && v.abs() > SIGN_THRESHOLD)
            .map(|(v, _)| *v);
        if first.is_some_and(|v| v < 0.0) {
            values.iter_mut().for_each(|v| *v = -*v);
        }
        modes.push((lambda, values));
    }
    order_modes(&mut modes)?;
    let (eigenvalues, eigenfunctions) = modes
        .into_iter()
        .map(|(l, values)| {
            (
                l,
                Eigenfunction::PiecewiseConstant {
                    breakpoints: breakpoints.clone(),
                    weights: weights.clone(),
                    values,
                },
            )
        })
        .unzip();
    Ok(SpectralData {
        model: model.clone(),
        eigenvalues,
        eigenfunctions,
        provenance: Provenance::Analytic,
        rank_exact: true,
        unretained_sq_mass: 0.0,
    })
}

/// Sorts by decreasing `|λ|`, rejecting opposite-sign ties among
/// non-negligible eigenvalues.
fn order_modes<T>(modes: &mut [(f64, T)]) -> Result<()> {
    modes.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()).then(b.0.total_cmp(&a.0)));
    let top = modes.first().map_or(0.0, |m| m.0.abs());
    for w in modes.windows(2) {
        let (a, b) = (w[0].0, w[1].0);
        if b.abs() > 1e-10 * top
            && (a.abs() - b.abs()).abs() < ORDER_TIE_TOL
            && a.signum() != b.signum()
        {
            return Err(Error::AssumptionViolation(format!(
                "eigenvalues {a} and {b} tie in magnitude; ordering by |λ| is ambiguous"
            )));
        }
    }
    Ok(())
}

/// Midpoint Nyström approximation keeping the `k` modes of largest `|λ|`.
pub fn nystrom_spectrum(model: &GraphonModel, m: usize, k: usize) -> Result<SpectralData> {
    if m < 64 {
        return Err(Error::Parameter(format!(
            "Nyström grid size must be at least 64, got {m}"
        )));
    }
    if k == 0 || k > m {
        return Err(Error::Parameter(format!(
            "retained modes must lie in 1..={m}, got {k}"
        )));
    }
    let w = model.evaluator();
    let inv_m = 1.0 / m as f64;
    let mut a = Matrix::zeros(m);
    for i in 0..m {
        for j in 0..=i {
            let v = w(node(i, m), node(j, m)) * inv_m;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let dec = symmetric_eigen(&a, true)?;
    let vecs = dec.vectors.expect("vectors requested");
    let mut modes: Vec<(f64, usize)> = dec.values.iter().copied().zip(0..m).collect();
    order_modes(&mut modes[..])?;

    let sqrt_m = (m as f64).sqrt();
    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenfunctions = Vec::with_capacity(k);
    for &(lambda, col) in &modes[..k] {
        let mut values: Vec<f64> = (0..m).map(|i| vecs[(i, col)] * sqrt_m).collect();
        if values
            .iter()
            .find(|v| v.abs() > SIGN_THRESHOLD)
            .is_some_and(|v| *v < 0.0)
        {
            values.iter_mut().for_each(|v| *v = -*v);
        }
        eigenvalues.push(lambda);
        eigenfunctions.push(Eigenfunction::Nodal { values });
    }
    let unretained_sq_mass = modes[k..].iter().map(|(l, _)| l * l).sum();
    Ok(SpectralData {
        model: model.clone(),
        eigenvalues,
        eigenfunctions,
        provenance: Provenance::Nystrom { m },
        rank_exact: false,
        unretained_sq_mass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NonDegenerate,
    Degenerate,
}

/// Constants attached to the target eigenvalue `λ_r`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeConstants {
    /// One-based target index in the `|λ|` ordering.
    pub r: usize,
    pub lambda_r: f64,
    /// `γ_r`: distance from `λ_r` to the rest of the spectrum, including 0.
    pub gap: f64,
    /// `σ_r² = Var(φ_r(U)²)`.
    pub sigma_sq: f64,
    /// `C_r = Σ_{k≠r} λ_k²/(λ_r − λ_k)` over the truncated modes.
    pub c_r: f64,
    /// Number of leading modes entering `C_r`.
    pub truncation: usize,
    /// `Σ λ_k²` over modes outside the truncation.
    pub tail_sq_mass: f64,
    /// `tail_sq_mass / γ_r`, bounding the omitted part of `C_r`.
    pub tail_bound: f64,
    pub regime: Regime,
}

impl RegimeConstants {
    /// Zero-based index of the target mode.
    pub fn index(&self) -> usize {
        self.r - 1
    }

    /// `λ_r² σ_r²`, the Gaussian limit variance.
    pub fn gaussian_variance(&self) -> f64 {
        self.lambda_r * self.lambda_r * self.sigma_sq
    }
}

/// Derives the regime constants for the `r`-th (one-based) eigenvalue.
///
/// `truncation` limits how many leading modes enter `C_r`; `None` uses all
/// retained modes.
pub fn regime_constants(
    spec: &SpectralData,
    r: usize,
    truncation: Option<usize>,
) -> Result<RegimeConstants> {
    let modes = spec.num_modes();
    if r == 0 || r > modes {
        return Err(Error::Parameter(format!(
            "target index r = {r} outside 1..={modes}"
        )));
    }
    let k_max = truncation.unwrap_or(modes).min(modes);
    if k_max < r {
        return Err(Error::Parameter(format!(
            "truncation {k_max} must include the target index {r}"
        )));
    }
    let idx = r - 1;
    let lambda_r = spec.eigenvalues[idx];
    if lambda_r.abs() < 1e-12 {
        return Err(Error::AssumptionViolation(format!(
            "λ_{r} = {lambda_r} is zero"
        )));
    }
    // 0 is always in the spectrum of a compact operator on L²[0,1].
    let gap = spec
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != idx)
        .map(|(_, l)| (lambda_r - l).abs())
        .fold(lambda_r.abs(), f64::min);
    if gap < MIN_GAP {
        return Err(Error::AssumptionViolation(format!(
            "eigengap at r = {r} is {gap:e}; λ_{r} is not simple"
        )));
    }
    let sigma_sq = spec.sigma_sq(idx);
    let c_r = spec.eigenvalues[..k_max]
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != idx)
        .map(|(_, l)| l * l / (lambda_r - l))
        .sum();
    let tail_sq_mass =
        spec.unretained_sq_mass + spec.eigenvalues[k_max..].iter().map(|l| l * l).sum::<f64>();
    Ok(RegimeConstants {
        r,
        lambda_r,
        gap,
        sigma_sq,
        c_r,
        truncation: k_max,
        tail_sq_mass,
        tail_bound: tail_sq_mass / gap,
        regime: if sigma_sq < DEGENERACY_TOL {
            Regime::Degenerate
        } else {
            Regime::NonDegenerate
        },
    })
}

/// Both sides of the square-summability inequality
/// `Σ_{k≠r} (λ_r λ_k/(λ_r − λ_k))² ≤ (λ_r²/γ_r²) Σ_{k≠r} λ_k²`.
pub fn coefficient_bound(spec: &SpectralData, constants: &RegimeConstants) -> (f64, f64) {
    let lr = constants.lambda_r;
    let others = spec
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != constants.index());
    let (mut lhs, mut mass) = (0.0, 0.0);
    for (_, &l) in others {
        lhs += (lr * l / (lr - l)).powi(2);
        mass += l * l;
    }
    (lhs, lr * lr / (constants.gap * constants.gap) * mass)
}
