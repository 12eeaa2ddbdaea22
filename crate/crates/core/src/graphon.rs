//! Graphon models `W : [0,1]² → ℝ₊`.
//!
//! Four families are supported: stochastic block models, the power kernel
//! `(xy)^α`, the Brownian square-root kernel `min{x,y} + √(xy)`, and kernels
//! tabulated on a uniform grid (piecewise constant on cells). Every preset is
//! evaluated in a way that makes `W(x,y) == W(y,x)` hold bit-for-bit.

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance for block proportion sums and connectivity symmetry.
pub const BLOCK_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockModel {
    pub proportions: Vec<f64>,
    pub connectivity: Vec<Vec<f64>>,
}

impl BlockModel {
    pub fn new(proportions: Vec<f64>, connectivity: Vec<Vec<f64>>) -> Self {
        BlockModel {
            proportions,
            connectivity,
        }
    }

    /// Two equal blocks with within-block `p` and cross-block `q`.
    pub fn symmetric(p: f64, q: f64) -> Self {
        Self::new(vec![0.5, 0.5], vec![vec![p, q], vec![q, p]])
    }

    /// A single block: the constant graphon `W ≡ c`.
    pub fn constant(c: f64) -> Self {
        Self::new(vec![1.0], vec![vec![c]])
    }

    pub fn num_blocks(&self) -> usize {
        self.proportions.len()
    }

    /// Right endpoints of the block intervals; the last is pinned to 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .proportions
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        out
    }

    /// Block containing `x`, using half-open intervals with the last closed.
    pub fn block_of(&self, x: f64) -> usize {
        block_index(&self.breakpoints(), x)
    }
}

/// Cell lookup in half-open intervals `[b_{i-1}, b_i)` with the last closed.
pub(crate) fn block_index(breakpoints: &[f64], x: f64) -> usize {
    let last = breakpoints.len() - 1;
    breakpoints.partition_point(|&b| b <= x).min(last)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridKernel {
    /// `m × m` values, constant on the cells `[i/m,(i+1)/m) × [j/m,(j+1)/m)`.
    pub values: Vec<Vec<f64>>,
}

impl GridKernel {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        GridKernel { values }
    }

    /// Tabulates `f` at cell midpoints.
    pub fn from_fn(m: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mid = |i: usize| (i as f64 + 0.5) / m as f64;
        GridKernel {
            values: (0..m)
                .map(|i| (0..m).map(|j| f(mid(i), mid(j))).collect())
                .collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn cell_of(&self, x: f64) -> usize {
        let m = self.size();
        ((x * m as f64) as usize).min(m - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphonModel {
    Block(BlockModel),
    PowerKernel { alpha: f64 },
    BrownianSqrt,
    Grid(GridKernel),
}

impl GraphonModel {
    pub fn name(&self) -> &'static str {
        match self {
            GraphonModel::Block(_) => "block",
            GraphonModel::PowerKernel { .. } => "power_kernel",
            GraphonModel::BrownianSqrt => "brownian_sqrt",
            GraphonModel::Grid(_) => "grid",
        }
    }

    /// `W(x, y)`; both coordinates must lie in `[0, 1]`.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        for (name, c) in [("x", x), ("y", y)] {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Domain(format!("{name} = {c} is outside [0, 1]")));
            }
        }
        Ok(self.value(x, y))
    }

    /// Unchecked evaluation for coordinates already known to be in range.
    #[inline]
    pub(crate) fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            GraphonModel::Block(b) => {
                let bp = b.breakpoints();
                let (i, j) = (block_index(&bp, x), block_index(&bp, y));
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                b.connectivity[lo][hi]
            }
            GraphonModel::PowerKernel { alpha } => (x * y).powf(*alpha),
            GraphonModel::BrownianSqrt => x.min(y) + (x * y).sqrt(),
            GraphonModel::Grid(g) => {
                let (i, j) = (g.cell_of(x), g.cell_of(y));
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                g.values[lo][hi]
            }
        }
    }

    /// Returns a function evaluating `W` with any per-model lookup tables
    /// precomputed, for tight loops over many points.
    pub(crate) fn evaluator(&self) -> impl Fn(f64, f64) -> f64 + '_ {
        let breakpoints = match self {
            GraphonModel::Block(b) => b.breakpoints(),
            _ => Vec::new(),
        };
        move |x, y| match self {
            GraphonModel::Block(b) => {
                let (i, j) = (block_index(&breakpoints, x), block_index(&breakpoints, y));
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                b.connectivity[lo][hi]
            }
            _ => self.value(x, y),
        }
    }

    /// Tight upper bound on `sup |W|`.
    pub fn sup_norm_bound(&self) -> f64 {
        match self {
            GraphonModel::Block(b) => max_entry(&b.connectivity),
            GraphonModel::PowerKernel { .. } => 1.0,
            GraphonModel::BrownianSqrt => 2.0,
            GraphonModel::Grid(g) => max_entry(&g.values),
        }
    }

    /// Whether Bernoulli edges can be drawn, i.e. `W` is a probability everywhere.
    pub fn edge_sampling_allowed(&self) -> bool {
        self.sup_norm_bound() <= 1.0
    }

    /// Checks model-level invariants, collecting every violation found.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        match self {
            GraphonModel::Block(b) => validate_block(b, &mut v),
            GraphonModel::PowerKernel { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    v.push(format!("alpha must lie in (0,1), got {alpha}"));
                }
            }
            GraphonModel::BrownianSqrt => {}
            GraphonModel::Grid(g) => validate_grid(g, &mut v),
        }
        if v.is_empty() {
            self.check_symmetry_and_range(&mut v);
        }
        ValidationReport { violations: v }
    }

    /// Returns an error describing the first violation, if any.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        match report.violations.first() {
            None => Ok(()),
            Some(first) => Err(Error::Config(format!(
                "invalid {} model: {first}",
                self.name()
            ))),
        }
    }

    fn check_symmetry_and_range(&self, v: &mut Vec<String>) {
        let bound = self.sup_norm_bound();
        // 10³ deterministic pairs from a two-dimensional Weyl sequence, plus corners.
        let (a1, a2) = (0.754_877_666_246_692_8, 0.569_840_290_998_053_3);
        let mut pts: Vec<(f64, f64)> = (0..1000)
            .map(|k| {
                let k = k as f64 + 0.5;
                ((k * a1).fract(), (k * a2).fract())
            })
            .collect();
        pts.extend([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        for (x, y) in pts {
            let (wxy, wyx) = (self.value(x, y), self.value(y, x));
            if wxy != wyx {
                v.push(format!(
                    "asymmetric evaluation at ({x}, {y}): {wxy} vs {wyx}"
                ));
                return;
            }
            if !(wxy >= 0.0 && wxy <= bound + 1e-12) {
                v.push(format!("value {wxy} at ({x}, {y}) outside [0, {bound}]"));
                return;
            }
        }
    }
}

fn max_entry(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().fold(0.0_f64, |m, &x| m.max(x))
}

fn validate_block(b: &BlockModel, v: &mut Vec<String>) {
    let k = b.proportions.len();
    if k == 0 {
        v.push("block model needs at least one block".into());
        return;
    }
    if b.proportions.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        v.push("proportions must be nonnegative".into());
    }
    let sum: f64 = b.proportions.iter().sum();
    if (sum - 1.0).abs() > BLOCK_TOL {
        v.push(format!("proportions sum to {}", round_for_display(sum)));
    }
    if b.connectivity.len() != k || b.connectivity.iter().any(|r| r.len() != k) {
        v.push(format!(
            "connectivity must be {k}x{k} to match the proportions"
        ));
        return;
    }
    for i in 0..k {
        for j in 0..k {
            let p = b.connectivity[i][j];
            if !(0.0..=1.0).contains(&p) {
                v.push(format!("connectivity entry ({i},{j}) = {p} outside [0,1]"));
            }
            if j > i && (p - b.connectivity[j][i]).abs() > BLOCK_TOL {
                v.push(format!("connectivity asymmetric at ({i},{j})"));
            }
        }
    }
}

fn validate_grid(g: &GridKernel, v: &mut Vec<String>) {
    let m = g.size();
    if m == 0 || g.values.iter().any(|r| r.len() != m) {
        v.push("grid kernel must be a non-empty square table".into());
        return;
    }
    for i in 0..m {
        for j in 0..m {
            let w = g.values[i][j];
            if !(0.0..=1.0).contains(&w) {
                v.push(format!("grid value at cell ({i},{j}) = {w} outside [0,1]"));
            }
            if j > i && w != g.values[j][i] {
                v.push(format!("asymmetry at cell ({i},{j})"));
            }
        }
    }
}

/// Trims floating noise such as `1.0999999999999999` for messages.
fn round_for_display(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}
