//! Kolmogorov–Smirnov tests with asymptotic p-values.

use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest sample accepted by either test.
pub const MIN_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsTest {
    /// `sup |F₁ − F₂|`.
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size entering the asymptotic distribution.
    pub effective_size: f64,
}

/// `Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2j²λ²}`, the Kolmogorov tail probability.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * (a * jf * jf).exp();
        sum += term;
        if term.abs() <= 1e-16 * sum.abs() {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    1.0
}

fn p_value(d: f64, m: f64) -> f64 {
    let sm = m.sqrt();
    kolmogorov_q((sm + 0.12 + 0.11 / sm) * d)
}

fn check_size(len: usize) -> Result<()> {
    if len < MIN_SAMPLES {
        return Err(Error::Parameter(format!(
            "KS test needs at least {MIN_SAMPLES} samples, got {len}"
        )));
    }
    Ok(())
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("KS samples contain NaN".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Compares `samples` with the distribution function `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsTest> {
    check_size(samples.len())?;
    let xs = sorted(samples)?;
    let m = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
    });
    Ok(KsTest {
        statistic: d,
        p_value: p_value(d, m),
        effective_size: m,
    })
}

/// Compares two samples through their empirical distribution functions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTest> {
    check_size(a.len())?;
    check_size(b.len())?;
    let (xa, xb) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let m = na * nb / (na + nb);
    Ok(KsTest {
        statistic: d,
        p_value: p_value(d, m),
        effective_size: m,
    })
}
