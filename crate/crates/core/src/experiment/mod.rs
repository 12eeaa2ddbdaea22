//! Monte Carlo harness: replications, the centered and scaled eigenvalue
//! statistics, and KS tests against the limit laws.

pub mod config;
pub mod ks;
pub mod report;

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{DiagnosticsLevel, ExperimentConfig, MatrixSource, SpectrumMethod};
pub use ks::{ks_one_sample, ks_two_sample, KsTest};
pub use report::{ExperimentReport, NamedKs, ReportStatus, SummaryStats};

use crate::decomp::{
    cross_projections, finite_rank_rhs, hoeffding_from_kernel, kato_temple_interval,
    normalization_expansion, resolvent_correction, unit_vector, CrossProjections, HoeffdingParts,
    KatoTemple, NormalizationCheck,
};
use crate::eigen::{match_target, symmetric_eigen, EigenDecomposition, MatchedEigenvalue};
use crate::error::{Error, Result};
use crate::limits::{law_cdf, limit_law, sample_law, LimitLaw};
use crate::matrix::Matrix;
use crate::sample::{SampleDraw, StreamKey, StreamLabel};
use crate::spectrum::{regime_constants, Regime, RegimeConstants, SpectralData};
use report::{
    ensure_writable, quantile_sorted, write_json, write_records_csv, Discard, SpectrumSummary,
};

/// Largest discarded fraction before a report is flagged.
pub const MAX_DISCARD_FRACTION: f64 = 0.2;

/// Statistic columns, in report order.
pub const STATISTICS: [&str; 6] = [
    "statistic_nondeg",
    "statistic_deg",
    "statistic_uncentered",
    "statistic_adj_diff",
    "adj_statistic_nondeg",
    "adj_statistic_deg",
];

/// Kato–Temple check on one draw. `verified` records whether the window
/// `(n−1)(λ_r ∓ γ_r/2)` holds the Rayleigh quotient and exactly one eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KatoTempleCheck {
    pub interval: Option<KatoTemple>,
    pub verified: bool,
    /// Whether the eigenvalue in the window lies in the interval; set only when verified.
    pub contained: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationDiagnostics {
    pub hoeffding: HoeffdingParts,
    /// `uᵀ K_n u` with `u ∝ (φ_r(U_i))_i`.
    pub rayleigh: f64,
    pub normalization: Option<NormalizationCheck>,
    pub kato_temple: Option<KatoTempleCheck>,
    pub cross_projections: Option<CrossProjections>,
    pub resolvent_correction: Option<f64>,
    /// Both sides of the finite-rank degenerate identity, when it applies.
    pub degenerate_identity: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FluctuationRecord {
    pub rep: u64,
    pub kernel: Option<MatchedEigenvalue>,
    pub adjacency: Option<MatchedEigenvalue>,
    /// `√n (λ/(n−1) − λ_r)` for the primary matrix (`K_n` unless only `A_n` is drawn).
    pub statistic_nondeg: Option<f64>,
    /// `λ − (n−1)λ_r − C_r`.
    pub statistic_deg: Option<f64>,
    /// `λ − (n−1)λ_r`.
    pub statistic_uncentered: Option<f64>,
    /// `√n (λ(A_n) − λ(K_n))/(n−1)`.
    pub statistic_adj_diff: Option<f64>,
    pub adj_statistic_nondeg: Option<f64>,
    pub adj_statistic_deg: Option<f64>,
    pub ambiguous: bool,
    pub discard_reason: Option<String>,
    pub diagnostics: Option<ReplicationDiagnostics>,
}

impl FluctuationRecord {
    fn failed(rep: u64, reason: String) -> Self {
        FluctuationRecord {
            rep,
            kernel: None,
            adjacency: None,
            statistic_nondeg: None,
            statistic_deg: None,
            statistic_uncentered: None,
            statistic_adj_diff: None,
            adj_statistic_nondeg: None,
            adj_statistic_deg: None,
            ambiguous: false,
            discard_reason: Some(reason),
            diagnostics: None,
        }
    }

    pub fn is_retained(&self) -> bool {
        !self.ambiguous && self.discard_reason.is_none()
    }

    /// A statistic by column name.
    pub fn statistic(&self, name: &str) -> Option<f64> {
        match name {
            "statistic_nondeg" => self.statistic_nondeg,
            "statistic_deg" => self.statistic_deg,
            "statistic_uncentered" => self.statistic_uncentered,
            "statistic_adj_diff" => self.statistic_adj_diff,
            "adj_statistic_nondeg" => self.adj_statistic_nondeg,
            "adj_statistic_deg" => self.adj_statistic_deg,
            _ => None,
        }
    }
}

/// Spectrum, regime constants and limit law shared by all replications.
#[derive(Clone, Debug)]
pub struct Setup {
    pub spec: SpectralData,
    pub constants: RegimeConstants,
    pub law: LimitLaw,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Setup> {
    config.validate()?;
    let spec = config.spectrum.compute(&config.model)?;
    let constants = regime_constants(&spec, config.r, config.truncation)?;
    let law = limit_law(&spec, &constants)?;
    Ok(Setup {
        spec,
        constants,
        law,
    })
}

/// One replication; subsystem errors mark the record discarded.
pub fn run_replication(
    config: &ExperimentConfig,
    spec: &SpectralData,
    constants: &RegimeConstants,
    rep: u64,
) -> FluctuationRecord {
    match replicate(config, spec, constants, rep) {
        Ok(record) => record,
        Err(e) => {
            warn!("replication {rep} discarded: {e}");
            FluctuationRecord::failed(rep, e.to_string())
        }
    }
}

fn replicate(
    config: &ExperimentConfig,
    spec: &SpectralData,
    constants: &RegimeConstants,
    rep: u64,
) -> Result<FluctuationRecord> {
    let n = config.n;
    let draw = SampleDraw::generate(
        &config.model,
        n,
        config.seed,
        rep,
        config.source.uses_adjacency(),
    )?;
    let k_eig = match config.source.uses_kernel() {
        true => Some(symmetric_eigen(&draw.kernel, false)?),
        false => None,
    };
    let a_eig = match &draw.adjacency {
        Some(a) => Some(symmetric_eigen(a, false)?),
        None => None,
    };
    let kernel = k_eig.as_ref().map(|e| match_target(e, constants, n));
    let adjacency = a_eig.as_ref().map(|e| match_target(e, constants, n));
    let ambiguous = [kernel, adjacency].iter().flatten().any(|m| !m.unambiguous);
    let mut record = FluctuationRecord {
        kernel,
        adjacency,
        ambiguous,
        ..FluctuationRecord::failed(rep, String::new())
    };
    record.discard_reason = None;
    if ambiguous {
        return Ok(record);
    }
    let nf = n as f64;
    let scale = nf - 1.0;
    let lr = constants.lambda_r;
    let stats = |m: &MatchedEigenvalue| {
        let uncentered = m.value - scale * lr;
        (
            nf.sqrt() * (m.normalized_value - lr),
            uncentered,
            uncentered - constants.c_r,
        )
    };
    let primary = kernel.or(adjacency).expect("at least one matrix is drawn");
    let (nondeg, uncentered, deg) = stats(&primary);
    record.statistic_nondeg = Some(nondeg);
    record.statistic_uncentered = Some(uncentered);
    record.statistic_deg = Some(deg);
    if let (Some(k), Some(a)) = (kernel, adjacency) {
        let (a_nondeg, _, a_deg) = stats(&a);
        record.statistic_adj_diff = Some(nf.sqrt() * (a.value - k.value) / scale);
        record.adj_statistic_nondeg = Some(a_nondeg);
        record.adj_statistic_deg = Some(a_deg);
    }
    if let (Some(e), Some(m)) = (&k_eig, kernel) {
        if config.diagnostics != DiagnosticsLevel::Off {
            record.diagnostics = Some(diagnose(config, spec, constants, &draw, e, m)?);
        }
    }
    Ok(record)
}

fn diagnose(
    config: &ExperimentConfig,
    spec: &SpectralData,
    constants: &RegimeConstants,
    draw: &SampleDraw,
    eig: &EigenDecomposition,
    matched: MatchedEigenvalue,
) -> Result<ReplicationDiagnostics> {
    let n = config.n;
    let scale = n as f64 - 1.0;
    let lr = constants.lambda_r;
    let phi = spec.phi_values(constants.index(), &draw.latents);
    let (u, _) = unit_vector(&phi)?;
    let k: &Matrix = &draw.kernel;
    let hoeffding = hoeffding_from_kernel(k, &phi, lr)?;
    let rayleigh = k.quadratic_form(&u);
    let normalization = normalization_expansion(hoeffding.s_rn, hoeffding.v_rn, n);

    let alpha = scale * (lr - constants.gap / 2.0);
    let beta = scale * (lr + constants.gap / 2.0);
    let in_window: Vec<f64> = eig
        .values
        .iter()
        .copied()
        .filter(|&v| alpha < v && v < beta)
        .collect();
    let kato_temple = Some(match kato_temple_interval(k, &u, alpha, beta) {
        Ok(kt) => {
            let verified = in_window.len() == 1;
            KatoTempleCheck {
                interval: Some(kt),
                verified,
                contained: verified.then(|| kt.contains(in_window[0])),
            }
        }
        Err(Error::Precondition(_)) => KatoTempleCheck {
            interval: None,
            verified: false,
            contained: None,
        },
        Err(e) => return Err(e),
    });
    debug_assert!(in_window.len() != 1 || in_window[0] == matched.value);

    let degenerate = constants.regime == Regime::Degenerate;
    let mut out = ReplicationDiagnostics {
        hoeffding,
        rayleigh,
        normalization,
        kato_temple,
        cross_projections: None,
        resolvent_correction: None,
        degenerate_identity: None,
    };
    if degenerate || config.diagnostics == DiagnosticsLevel::Full {
        let t = cross_projections(spec, config.r, &draw.latents, constants.truncation)?;
        if degenerate && spec.rank_exact && constants.truncation == spec.num_modes() {
            let lhs = scale * out.hoeffding.degenerate;
            out.degenerate_identity = Some((lhs, finite_rank_rhs(spec, &t, &draw.latents)));
        }
        out.cross_projections = Some(t);
        out.resolvent_correction = Some(resolvent_correction(k, &u, lr, n)?);
    }
    Ok(out)
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))
}

/// All replications of `config`, sorted by replication index.
pub fn run_records(config: &ExperimentConfig, setup: &Setup) -> Result<Vec<FluctuationRecord>> {
    let pool = thread_pool(config.threads)?;
    let mut records: Vec<FluctuationRecord> = pool.install(|| {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| run_replication(config, &setup.spec, &setup.constants, rep))
            .collect()
    });
    records.sort_by_key(|r| r.rep);
    Ok(records)
}

fn named_ks(statistic: &str, reference: &str, test: Result<KsTest>) -> Option<NamedKs> {
    match test {
        Ok(test) => Some(NamedKs {
            statistic: statistic.into(),
            reference: reference.into(),
            test,
        }),
        Err(e) => {
            warn!("KS test of {statistic} skipped: {e}");
            None
        }
    }
}

/// KS tests of the retained statistics against the regime's limit law.
fn limit_tests(
    config: &ExperimentConfig,
    setup: &Setup,
    records: &[FluctuationRecord],
) -> Vec<NamedKs> {
    let column =
        |name: &str| -> Vec<f64> { records.iter().filter_map(|r| r.statistic(name)).collect() };
    let law = &setup.law;
    let both = config.source == MatrixSource::Both;
    let mut out = Vec::new();
    match setup.constants.regime {
        Regime::NonDegenerate => {
            let cdf = |x| law_cdf(law, x);
            out.push(named_ks(
                "statistic_nondeg",
                "gaussian_limit",
                ks_one_sample(&column("statistic_nondeg"), cdf),
            ));
            if both {
                out.push(named_ks(
                    "adj_statistic_nondeg",
                    "gaussian_limit",
                    ks_one_sample(&column("adj_statistic_nondeg"), cdf),
                ));
            }
        }
        Regime::Degenerate => {
            let deg = column("statistic_deg");
            if law.is_point_mass() {
                out.push(named_ks(
                    "statistic_deg",
                    "point_mass",
                    ks_one_sample(&deg, |x| law_cdf(law, x)),
                ));
            } else {
                let mut rng = StreamKey::new(config.seed, 0, StreamLabel::Limit).rng();
                let reference = sample_law(law, config.limit_samples, &mut rng);
                out.push(named_ks(
                    "statistic_deg",
                    "chi_square_limit_samples",
                    ks_two_sample(&deg, &reference),
                ));
            }
            if both {
                out.push(named_ks(
                    "adj_statistic_deg",
                    "statistic_deg",
                    ks_two_sample(&column("adj_statistic_deg"), &deg),
                ));
            }
        }
    }
    out.into_iter().flatten().collect()
}

/// Runs every replication, aggregates, tests and (with `out_dir`) writes
/// `records.csv` and `summary.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if let Some(dir) = &config.out_dir {
        ensure_writable(dir)?;
    }
    let start = Instant::now();
    let setup = prepare(config)?;
    info!(
        "{}: r = {}, λ_r = {}, regime {:?}, {} replications at n = {}",
        config.model.name(),
        config.r,
        setup.constants.lambda_r,
        setup.constants.regime,
        config.replications,
        config.n
    );
    let all = run_records(config, &setup)?;
    let ambiguous = all.iter().filter(|r| r.ambiguous).count();
    let discarded: Vec<Discard> = all
        .iter()
        .filter(|r| !r.is_retained())
        .map(|r| Discard {
            rep: r.rep,
            reason: r
                .discard_reason
                .clone()
                .unwrap_or_else(|| "ambiguous match".into()),
        })
        .collect();
    let failed = discarded.len() - ambiguous;
    let records: Vec<FluctuationRecord> = all
        .into_iter()
        .filter(FluctuationRecord::is_retained)
        .collect();
    let summary = STATISTICS
        .iter()
        .filter_map(|&s| {
            let col: Vec<f64> = records.iter().filter_map(|r| r.statistic(s)).collect();
            (!col.is_empty()).then(|| (s.to_string(), SummaryStats::from_samples(&col)))
        })
        .collect();
    let ks = limit_tests(config, &setup, &records);
    let fraction = discarded.len() as f64 / config.replications as f64;
    let status = if fraction > MAX_DISCARD_FRACTION {
        ReportStatus::ExperimentQuality(format!(
            "{} of {} replications discarded ({ambiguous} ambiguous, {failed} failed)",
            discarded.len(),
            config.replications
        ))
    } else {
        ReportStatus::Ok
    };
    let report = ExperimentReport {
        config: config.clone(),
        spectrum: SpectrumSummary::new(&setup.spec),
        regime: setup.constants.regime,
        constants: setup.constants.clone(),
        law: setup.law.clone(),
        replications: config.replications,
        retained: records.len(),
        ambiguous,
        failed,
        discarded,
        summary,
        ks,
        status,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        records,
    };
    if let Some(dir) = &config.out_dir {
        write_experiment(dir, &report)?;
        if config.dump_draw {
            dump_draw(dir, config)?;
        }
    }
    Ok(report)
}

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DRAW_FILE: &str = "draw_rep0.json";
pub const COMPARISON_FILE: &str = "comparison.json";

fn write_experiment(dir: &Path, report: &ExperimentReport) -> Result<()> {
    write_records_csv(&dir.join(RECORDS_FILE), &report.records)?;
    write_json(&dir.join(SUMMARY_FILE), report)
}

#[derive(Serialize)]
struct DrawDump {
    rep: u64,
    latents: Vec<f64>,
    kernel_eigenvalues: Option<Vec<f64>>,
    adjacency_eigenvalues: Option<Vec<f64>>,
}

fn dump_draw(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    let draw = SampleDraw::generate(
        &config.model,
        config.n,
        config.seed,
        0,
        config.source.uses_adjacency(),
    )?;
    let dump = DrawDump {
        rep: 0,
        kernel_eigenvalues: match config.source.uses_kernel() {
            true => Some(symmetric_eigen(&draw.kernel, false)?.values),
            false => None,
        },
        adjacency_eigenvalues: match &draw.adjacency {
            Some(a) => Some(symmetric_eigen(a, false)?.values),
            None => None,
        },
        latents: draw.latents,
    };
    write_json(&dir.join(DRAW_FILE), &dump)
}

/// Distribution of `|statistic_adj_diff|` at one ladder size.
#[derive(Clone, Debug, Serialize)]
pub struct LadderLevel {
    pub n: usize,
    pub retained: usize,
    pub median_abs_diff: f64,
    pub p90_abs_diff: f64,
    /// Gaussian KS of the adjacency statistic (non-degenerate regime) or its
    /// two-sample comparison with the kernel statistic (degenerate regime).
    pub adjacency_ks: Option<NamedKs>,
    pub status: ReportStatus,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub levels: Vec<LadderLevel>,
    pub medians_decreasing: bool,
    #[serde(skip)]
    pub reports: Vec<ExperimentReport>,
}

/// Runs the experiment with both matrices along the size ladder and
/// summarizes how `√n(λ_r(A_n) − λ_r(K_n))/(n−1)` shrinks.
pub fn adjacency_comparison(config: &ExperimentConfig) -> Result<ComparisonReport> {
    if config.source != MatrixSource::Both {
        return Err(Error::Config(
            "the adjacency comparison needs source = both".into(),
        ));
    }
    config.validate()?;
    let ladder = config.ladder_sizes();
    config::check_ladder(&ladder)?;
    if let Some(dir) = &config.out_dir {
        ensure_writable(dir)?;
    }
    let mut levels = Vec::new();
    let mut reports = Vec::new();
    for &n in &ladder {
        let level_config = ExperimentConfig {
            n,
            out_dir: None,
            dump_draw: false,
            ..config.clone()
        };
        let report = run_experiment(&level_config)?;
        let mut diffs: Vec<f64> = report
            .column("statistic_adj_diff")
            .iter()
            .map(|d| d.abs())
            .collect();
        diffs.sort_by(f64::total_cmp);
        let adjacency_ks = report
            .ks
            .iter()
            .find(|k| k.statistic.starts_with("adj_"))
            .cloned();
        if let Some(dir) = &config.out_dir {
            write_records_csv(&dir.join(format!("records_n{n}.csv")), &report.records)?;
        }
        levels.push(LadderLevel {
            n,
            retained: report.retained,
            median_abs_diff: quantile_sorted(&diffs, 0.5),
            p90_abs_diff: quantile_sorted(&diffs, 0.9),
            adjacency_ks,
            status: report.status.clone(),
        });
        reports.push(report);
    }
    let medians_decreasing = levels
        .windows(2)
        .all(|w| w[1].median_abs_diff < w[0].median_abs_diff);
    let out = ComparisonReport {
        levels,
        medians_decreasing,
        reports,
    };
    if let Some(dir) = &config.out_dir {
        write_json(&dir.join(COMPARISON_FILE), &out)?;
    }
    Ok(out)
}
