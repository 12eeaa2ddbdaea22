use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::ks::KsTest;
use super::FluctuationRecord;
use crate::error::{Error, Result};
use crate::limits::LimitLaw;
use crate::spectrum::{Provenance, Regime, RegimeConstants, SpectralData};

/// Moments of one statistic column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
}

impl SummaryStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        let count = xs.len();
        let n = count as f64;
        if count == 0 {
            return SummaryStats {
                count,
                mean: f64::NAN,
                variance: f64::NAN,
                skewness: f64::NAN,
                kurtosis: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in xs {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
        SummaryStats {
            count,
            mean,
            variance: if count > 1 { m2 * n / (n - 1.0) } else { 0.0 },
            skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
            kurtosis: if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 },
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedKs {
    /// Column tested.
    pub statistic: String,
    /// What it was tested against.
    pub reference: String,
    #[serde(flatten)]
    pub test: KsTest,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumSummary {
    pub provenance: Provenance,
    pub rank_exact: bool,
    pub retained_modes: usize,
    /// Leading eigenvalues, at most 20.
    pub eigenvalues: Vec<f64>,
    pub sigma_sq: Vec<f64>,
}

impl SpectrumSummary {
    pub fn new(spec: &SpectralData) -> Self {
        let k = spec.num_modes().min(20);
        SpectrumSummary {
            provenance: spec.provenance.clone(),
            rank_exact: spec.rank_exact,
            retained_modes: spec.num_modes(),
            eigenvalues: spec.eigenvalues[..k].to_vec(),
            sigma_sq: (0..k).map(|j| spec.sigma_sq(j)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discard {
    pub rep: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "state", content = "message", rename_all = "snake_case")]
pub enum ReportStatus {
    Ok,
    ExperimentQuality(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub spectrum: SpectrumSummary,
    pub constants: RegimeConstants,
    pub regime: Regime,
    pub law: LimitLaw,
    pub replications: usize,
    pub retained: usize,
    pub ambiguous: usize,
    pub failed: usize,
    pub discarded: Vec<Discard>,
    pub summary: Vec<(String, SummaryStats)>,
    pub ks: Vec<NamedKs>,
    pub status: ReportStatus,
    pub wall_clock_seconds: f64,
    /// Retained records, sorted by replication.
    #[serde(skip)]
    pub records: Vec<FluctuationRecord>,
}

impl ExperimentReport {
    pub fn ks_for(&self, statistic: &str) -> Option<&NamedKs> {
        self.ks.iter().find(|k| k.statistic == statistic)
    }

    pub fn summary_for(&self, statistic: &str) -> Option<&SummaryStats> {
        self.summary
            .iter()
            .find(|(s, _)| s == statistic)
            .map(|(_, s)| s)
    }

    /// Values of a named statistic column over the retained records.
    pub fn column(&self, statistic: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.statistic(statistic))
            .collect()
    }
}

/// Checks that `dir` exists (creating it) and accepts new files.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".write-probe");
    fs::File::create(&probe)
        .and_then(|mut f| f.write_all(b"ok"))
        .map_err(|e| Error::Config(format!("{} is not writable: {e}", dir.display())))?;
    fs::remove_file(&probe)?;
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn fmt_bool(b: Option<bool>) -> String {
    b.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the per-replication table. Diagnostic columns appear when any
/// record carries diagnostics; one `T_k` column per cross-projection mode.
pub fn write_records_csv(path: &Path, records: &[FluctuationRecord]) -> Result<()> {
    let with_diag = records.iter().any(|r| r.diagnostics.is_some());
    let t_modes: Vec<usize> = records
        .iter()
        .filter_map(|r| r.diagnostics.as_ref()?.cross_projections.as_ref())
        .map(|t| t.modes.clone())
        .next()
        .unwrap_or_default();
    let mut header: Vec<String> = [
        "rep",
        "matched_index",
        "matched_value",
        "statistic_nondeg",
        "statistic_deg",
        "statistic_uncentered",
        "adj_matched_value",
        "statistic_adj_diff",
        "adj_statistic_nondeg",
        "adj_statistic_deg",
        "ambiguous",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if with_diag {
        header.extend(
            [
                "v_rn",
                "s_rn",
                "rayleigh",
                "hoeffding_theta",
                "hoeffding_linear",
                "hoeffding_degenerate",
                "hoeffding_error",
                "normalization_deviation",
                "normalization_bound",
                "kt_lower",
                "kt_upper",
                "kt_verified",
                "kt_contained",
                "resolvent_correction",
                "identity_lhs",
                "identity_rhs",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        header.extend(t_modes.iter().map(|k| format!("t_{k}")));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(&header)
        .map_err(|e| Error::Io(e.to_string()))?;
    for r in records {
        let primary = r.kernel.or(r.adjacency);
        let mut row = vec![
            r.rep.to_string(),
            primary
                .map(|m| m.index_in_sorted.to_string())
                .unwrap_or_default(),
            fmt_opt(primary.map(|m| m.value)),
            fmt_opt(r.statistic_nondeg),
            fmt_opt(r.statistic_deg),
            fmt_opt(r.statistic_uncentered),
            fmt_opt(if r.kernel.is_some() {
                r.adjacency.map(|m| m.value)
            } else {
                None
            }),
            fmt_opt(r.statistic_adj_diff),
            fmt_opt(r.adj_statistic_nondeg),
            fmt_opt(r.adj_statistic_deg),
            r.ambiguous.to_string(),
        ];
        if with_diag {
            let d = r.diagnostics.as_ref();
            let h = d.map(|d| &d.hoeffding);
            let norm = d.and_then(|d| d.normalization);
            let kt = d.and_then(|d| d.kato_temple.as_ref());
            let ident = d.and_then(|d| d.degenerate_identity);
            row.extend([
                fmt_opt(h.map(|h| h.v_rn)),
                fmt_opt(h.map(|h| h.s_rn)),
                fmt_opt(d.map(|d| d.rayleigh)),
                fmt_opt(h.map(|h| h.theta)),
                fmt_opt(h.map(|h| h.linear)),
                fmt_opt(h.map(|h| h.degenerate)),
                fmt_opt(h.map(|h| h.reconstruction_error())),
                fmt_opt(norm.map(|c| c.deviation)),
                fmt_opt(norm.map(|c| c.bound)),
                fmt_opt(kt.and_then(|k| k.interval.map(|i| i.lower))),
                fmt_opt(kt.and_then(|k| k.interval.map(|i| i.upper))),
                fmt_bool(kt.map(|k| k.verified)),
                fmt_bool(kt.and_then(|k| k.contained)),
                fmt_opt(d.and_then(|d| d.resolvent_correction)),
                fmt_opt(ident.map(|p| p.0)),
                fmt_opt(ident.map(|p| p.1)),
            ]);
            let t = d.and_then(|d| d.cross_projections.as_ref());
            row.extend((0..t_modes.len()).map(|j| fmt_opt(t.map(|t| t.values[j]))));
        }
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_symmetric_sample() {
        let s = SummaryStats::from_samples(&[-1.0, 0.0, 1.0]);
        assert_eq!(
            (s.count, s.mean, s.variance, s.skewness),
            (3, 0.0, 1.0, 0.0)
        );
        assert!((s.kurtosis + 1.5).abs() < 1e-15);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
