//! The two limit laws of the eigenvalue fluctuation theorem: a centered
//! Gaussian in the non-degenerate regime and a weighted chi-square series
//! `Σ c_k (Z_k² − 1)` in the degenerate one.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::sample::{StreamKey, StreamLabel};
use crate::spectrum::{Regime, RegimeConstants, SpectralData};

/// Samples in the cached Monte Carlo CDF table of a weighted chi-square law.
pub const CDF_TABLE_SIZE: usize = 1_000_000;
/// Seed of the stream that fills CDF tables.
pub const CDF_TABLE_SEED: u64 = 0x5eed_cdf0;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitLaw {
    Gaussian {
        variance: f64,
    },
    WeightedChiSquare {
        /// `c_k = λ_r λ_k / (λ_r − λ_k)` over retained `k ≠ r` with `λ_k ≠ 0`.
        coefficients: Vec<f64>,
        /// One-based mode index of each coefficient.
        modes: Vec<usize>,
        /// `C_r` over the same modes.
        centering: f64,
        truncation: usize,
        /// `Σ λ_k²` over modes outside the truncation.
        tail_sq_mass: f64,
    },
}

impl LimitLaw {
    pub fn mean(&self) -> f64 {
        0.0
    }

    /// `σ²` for the Gaussian, `2 Σ c_k²` for the chi-square series.
    pub fn variance(&self) -> f64 {
        match self {
            LimitLaw::Gaussian { variance } => *variance,
            LimitLaw::WeightedChiSquare { coefficients, .. } => {
                2.0 * coefficients.iter().map(|c| c * c).sum::<f64>()
            }
        }
    }

    pub fn is_point_mass(&self) -> bool {
        match self {
            LimitLaw::Gaussian { variance } => *variance == 0.0,
            LimitLaw::WeightedChiSquare { coefficients, .. } => coefficients.is_empty(),
        }
    }

    /// Absolute accuracy of [`law_cdf`]: `1e-10` for the Gaussian, and for the
    /// Monte Carlo table the DKW radius at confidence `1 − 10⁻³`.
    pub fn cdf_accuracy(&self) -> f64 {
        match self {
            LimitLaw::WeightedChiSquare { coefficients, .. } if !coefficients.is_empty() => {
                ((2.0f64 / 1e-3).ln() / (2.0 * CDF_TABLE_SIZE as f64)).sqrt()
            }
            _ => 1e-10,
        }
    }
}

/// `N(0, λ_r² σ_r²)`.
pub fn gaussian_law(constants: &RegimeConstants) -> Result<LimitLaw> {
    if constants.regime != Regime::NonDegenerate {
        return Err(Error::WrongRegime(format!(
            "σ_{}² = {:e}: the Gaussian limit applies only in the non-degenerate regime",
            constants.r, constants.sigma_sq
        )));
    }
    Ok(LimitLaw::Gaussian {
        variance: constants.gaussian_variance(),
    })
}

/// Weighted chi-square series over the first `truncation` modes.
pub fn chi_square_law(
    spec: &SpectralData,
    constants: &RegimeConstants,
    truncation: usize,
) -> Result<LimitLaw> {
    if constants.regime != Regime::Degenerate {
        return Err(Error::WrongRegime(format!(
            "σ_{}² = {:e}: the chi-square limit applies only in the degenerate regime",
            constants.r, constants.sigma_sq
        )));
    }
    let modes = spec.num_modes();
    if truncation > modes || truncation < constants.r {
        return Err(Error::Parameter(format!(
            "truncation {truncation} must lie in {}..={modes}",
            constants.r
        )));
    }
    let lr = constants.lambda_r;
    let mut coefficients = Vec::new();
    let mut mode_ids = Vec::new();
    let mut centering = 0.0;
    for (k, &l) in spec.eigenvalues[..truncation].iter().enumerate() {
        if k == constants.index() || l == 0.0 {
            continue;
        }
        coefficients.push(lr * l / (lr - l));
        mode_ids.push(k + 1);
        centering += l * l / (lr - l);
    }
    let tail_sq_mass = spec.unretained_sq_mass
        + spec.eigenvalues[truncation..]
            .iter()
            .map(|l| l * l)
            .sum::<f64>();
    Ok(LimitLaw::WeightedChiSquare {
        coefficients,
        modes: mode_ids,
        centering,
        truncation,
        tail_sq_mass,
    })
}

/// The law matching the regime of `constants`, using all retained modes
/// up to `constants.truncation` for the chi-square series.
pub fn limit_law(spec: &SpectralData, constants: &RegimeConstants) -> Result<LimitLaw> {
    match constants.regime {
        Regime::NonDegenerate => gaussian_law(constants),
        Regime::Degenerate => chi_square_law(spec, constants, constants.truncation),
    }
}

/// `count` independent draws from `law`.
pub fn sample_law<R: Rng + ?Sized>(law: &LimitLaw, count: usize, rng: &mut R) -> Vec<f64> {
    match law {
        LimitLaw::Gaussian { variance } => {
            let sd = variance.sqrt();
            (0..count)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        LimitLaw::WeightedChiSquare { coefficients, .. } => (0..count)
            .map(|_| {
                coefficients
                    .iter()
                    .map(|c| {
                        let z: f64 = rng.sample(StandardNormal);
                        c * (z * z - 1.0)
                    })
                    .sum()
            })
            .collect(),
    }
}

type TableCache = Mutex<HashMap<Vec<u64>, Arc<Vec<f64>>>>;

/// Sorted Monte Carlo samples of a chi-square law, built once per coefficient vector.
fn cdf_table(coefficients: &[f64]) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    let key: Vec<u64> = coefficients.iter().map(|c| c.to_bits()).collect();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().expect("cdf cache poisoned").get(&key) {
        return Arc::clone(t);
    }
    let law = LimitLaw::WeightedChiSquare {
        coefficients: coefficients.to_vec(),
        modes: Vec::new(),
        centering: 0.0,
        truncation: 0,
        tail_sq_mass: 0.0,
    };
    let mut rng = StreamKey::new(CDF_TABLE_SEED, 0, StreamLabel::Limit).rng();
    let mut samples = sample_law(&law, CDF_TABLE_SIZE, &mut rng);
    samples.sort_by(f64::total_cmp);
    let table = Arc::new(samples);
    cache
        .lock()
        .expect("cdf cache poisoned")
        .entry(key)
        .or_insert(table)
        .clone()
}

/// `P(X ≤ x)` under `law`.
pub fn law_cdf(law: &LimitLaw, x: f64) -> f64 {
    if law.is_point_mass() {
        return if x >= 0.0 { 1.0 } else { 0.0 };
    }
    match law {
        LimitLaw::Gaussian { variance } => Normal::new(0.0, variance.sqrt())
            .expect("positive variance")
            .cdf(x),
        LimitLaw::WeightedChiSquare { coefficients, .. } => {
            let table = cdf_table(coefficients);
            table.partition_point(|&s| s <= x) as f64 / table.len() as f64
        }
    }
}

/// The `p`-quantile of `law`, `p ∈ (0, 1)`.
pub fn law_quantile(law: &LimitLaw, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!(
            "quantile level {p} outside (0, 1)"
        )));
    }
    if law.is_point_mass() {
        return Ok(0.0);
    }
    Ok(match law {
        LimitLaw::Gaussian { variance } => Normal::new(0.0, variance.sqrt())
            .expect("positive variance")
            .inverse_cdf(p),
        LimitLaw::WeightedChiSquare { coefficients, .. } => {
            let table = cdf_table(coefficients);
            let idx = ((p * table.len() as f64).ceil() as usize).clamp(1, table.len()) - 1;
            table[idx]
        }
    })
}

/// Levels reported by the `limit` subcommand.
pub const QUANTILE_LEVELS: [f64; 9] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::{BlockModel, GraphonModel};
    use crate::spectrum::{analytic_spectrum, regime_constants};

    fn sbm_law() -> (SpectralData, RegimeConstants, LimitLaw) {
        let spec =
            analytic_spectrum(&GraphonModel::Block(BlockModel::symmetric(0.6, 0.2))).unwrap();
        let c = regime_constants(&spec, 2, None).unwrap();
        let law = chi_square_law(&spec, &c, 2).unwrap();
        (spec, c, law)
    }

    #[test]
    fn symmetric_sbm_coefficients() {
        let (_, _, law) = sbm_law();
        let LimitLaw::WeightedChiSquare {
            coefficients,
            centering,
            modes,
            ..
        } = &law
        else {
            panic!("expected chi-square law")
        };
        assert_eq!(modes, &vec![1]);
        // c_1 = (0.2 · 0.4)/(0.2 − 0.4), C_2 = 0.16/(0.2 − 0.4)
        assert!((coefficients[0] + 0.4).abs() < 1e-14);
        assert!((centering + 0.8).abs() < 1e-14);
        assert!((law.variance() - 0.32).abs() < 1e-14);
    }

    #[test]
    fn regime_gates() {
        let (spec, c, _) = sbm_law();
        assert!(matches!(gaussian_law(&c), Err(Error::WrongRegime(_))));
        let power = analytic_spectrum(&GraphonModel::PowerKernel { alpha: 0.5 }).unwrap();
        let pc = regime_constants(&power, 1, None).unwrap();
        assert!(matches!(
            chi_square_law(&spec, &pc, 1),
            Err(Error::WrongRegime(_))
        ));
        let law = gaussian_law(&pc).unwrap();
        assert!((law.variance() - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_law_is_point_mass() {
        let spec = analytic_spectrum(&GraphonModel::Block(BlockModel::constant(0.5))).unwrap();
        let c = regime_constants(&spec, 1, None).unwrap();
        let law = chi_square_law(&spec, &c, 1).unwrap();
        assert!(law.is_point_mass());
        assert_eq!(law_cdf(&law, -1e-9), 0.0);
        assert_eq!(law_cdf(&law, 0.0), 1.0);
        let mut rng = StreamKey::new(0, 0, StreamLabel::Limit).rng();
        assert!(sample_law(&law, 5, &mut rng).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn gaussian_cdf_values() {
        let unit = LimitLaw::Gaussian { variance: 1.0 };
        assert!((law_cdf(&unit, 0.0) - 0.5).abs() < 1e-15);
        let wide = LimitLaw::Gaussian { variance: 4.0 };
        assert!((law_cdf(&wide, 2.0) - 0.841_344_746_068_542_9).abs() < 1e-10);
        let zero = LimitLaw::Gaussian { variance: 0.0 };
        let mut rng = StreamKey::new(0, 0, StreamLabel::Limit).rng();
        assert!(sample_law(&zero, 5, &mut rng).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn chi_square_support_bound() {
        let (_, _, law) = sbm_law();
        assert_eq!(law_cdf(&law, 0.4), 1.0);
        assert!(law_cdf(&law, 0.39) < 1.0);
        let mut rng = StreamKey::new(3, 0, StreamLabel::Limit).rng();
        assert!(sample_law(&law, 10_000, &mut rng).iter().all(|&s| s <= 0.4));
    }

    #[test]
    fn quantiles_are_monotone() {
        let (_, _, law) = sbm_law();
        let q: Vec<f64> = QUANTILE_LEVELS
            .iter()
            .map(|&p| law_quantile(&law, p).unwrap())
            .collect();
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
        assert!(law_quantile(&law, 1.0).is_err());
    }
}
