//! Command-line front end: config parsing, subcommand dispatch and run
//! manifests. The config schema is documented in `docs/config-schema.md`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use eigfluct::error::{Error, Result};
use eigfluct::experiment::report::{write_json, SpectrumSummary};
use eigfluct::experiment::{
    self, adjacency_comparison, run_experiment, DiagnosticsLevel, ExperimentConfig, MatrixSource,
    ReportStatus, SpectrumMethod,
};
use eigfluct::graphon::{BlockModel, GraphonModel, GridKernel};
use eigfluct::limits::{law_quantile, LimitLaw, QUANTILE_LEVELS};
use eigfluct::spectrum::{coefficient_bound, RegimeConstants};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Config file as written by the user; every key is optional except the
/// model, `r`, `n`, `replications` and `seed`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelKind,
    alpha: Option<f64>,
    p: Option<f64>,
    q: Option<f64>,
    proportions: Option<Vec<f64>>,
    connectivity: Option<Vec<Vec<f64>>>,
    grid: Option<Vec<Vec<f64>>>,
    r: usize,
    n: usize,
    replications: usize,
    seed: u64,
    source: Option<SourceKind>,
    spectrum: Option<SpectrumKind>,
    nystrom_nodes: Option<usize>,
    nystrom_modes: Option<usize>,
    diagnostics: Option<DiagnosticsKind>,
    truncation: Option<usize>,
    threads: Option<usize>,
    ladder: Option<Vec<usize>>,
    limit_samples: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
enum ModelKind {
    PowerKernel,
    SymmetricSbm,
    Sbm,
    BrownianSqrt,
    Grid,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum SourceKind {
    Kernel,
    Adjacency,
    Both,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum SpectrumKind {
    Analytic,
    Nystrom,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum DiagnosticsKind {
    Off,
    Auto,
    Full,
}

fn require<T>(value: Option<T>, key: &str, model: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("{key}: required for model {model}")))
}

fn forbid<T>(value: &Option<T>, key: &str, model: &str) -> Result<()> {
    match value {
        Some(_) => Err(Error::Config(format!("{key}: not used by model {model}"))),
        None => Ok(()),
    }
}

impl RawConfig {
    fn model(&self) -> Result<GraphonModel> {
        let name = match self.model {
            ModelKind::PowerKernel => "power_kernel",
            ModelKind::SymmetricSbm => "symmetric_sbm",
            ModelKind::Sbm => "sbm",
            ModelKind::BrownianSqrt => "brownian_sqrt",
            ModelKind::Grid => "grid",
        };
        let uses = |key: &str| match self.model {
            ModelKind::PowerKernel => key == "alpha",
            ModelKind::SymmetricSbm => key == "p" || key == "q",
            ModelKind::Sbm => key == "proportions" || key == "connectivity",
            ModelKind::BrownianSqrt => false,
            ModelKind::Grid => key == "grid",
        };
        let present = [
            ("alpha", self.alpha.is_some()),
            ("p", self.p.is_some()),
            ("q", self.q.is_some()),
            ("proportions", self.proportions.is_some()),
            ("connectivity", self.connectivity.is_some()),
            ("grid", self.grid.is_some()),
        ];
        for (key, set) in present {
            if set && !uses(key) {
                forbid(&Some(()), key, name)?;
            }
        }
        Ok(match self.model {
            ModelKind::PowerKernel => GraphonModel::PowerKernel {
                alpha: require(self.alpha, "alpha", name)?,
            },
            ModelKind::SymmetricSbm => GraphonModel::Block(BlockModel::symmetric(
                require(self.p, "p", name)?,
                require(self.q, "q", name)?,
            )),
            ModelKind::Sbm => GraphonModel::Block(BlockModel::new(
                require(self.proportions.clone(), "proportions", name)?,
                require(self.connectivity.clone(), "connectivity", name)?,
            )),
            ModelKind::BrownianSqrt => GraphonModel::BrownianSqrt,
            ModelKind::Grid => {
                GraphonModel::Grid(GridKernel::new(require(self.grid.clone(), "grid", name)?))
            }
        })
    }

    fn into_config(self) -> Result<ExperimentConfig> {
        let model = self.model()?;
        let mut config = ExperimentConfig::new(model, self.r, self.n, self.replications, self.seed);
        if let Some(s) = self.source {
            config.source = match s {
                SourceKind::Kernel => MatrixSource::Kernel,
                SourceKind::Adjacency => MatrixSource::Adjacency,
                SourceKind::Both => MatrixSource::Both,
            };
        }
        let nystrom_keys = self.nystrom_nodes.is_some() || self.nystrom_modes.is_some();
        config.spectrum = match (self.spectrum, config.spectrum) {
            (Some(SpectrumKind::Analytic), _) => {
                if nystrom_keys {
                    return Err(Error::Config(
                        "nystrom_nodes: not used with spectrum = analytic".into(),
                    ));
                }
                SpectrumMethod::Analytic
            }
            (Some(SpectrumKind::Nystrom), _) | (None, SpectrumMethod::Nystrom { .. }) => {
                SpectrumMethod::Nystrom {
                    nodes: self
                        .nystrom_nodes
                        .unwrap_or(experiment::config::DEFAULT_NYSTROM_NODES),
                    modes: self
                        .nystrom_modes
                        .unwrap_or(experiment::config::DEFAULT_NYSTROM_MODES),
                }
            }
            (None, SpectrumMethod::Analytic) => {
                if nystrom_keys {
                    return Err(Error::Config(
                        "nystrom_nodes: set spectrum = nystrom to use it".into(),
                    ));
                }
                SpectrumMethod::Analytic
            }
        };
        if let Some(d) = self.diagnostics {
            config.diagnostics = match d {
                DiagnosticsKind::Off => DiagnosticsLevel::Off,
                DiagnosticsKind::Auto => DiagnosticsLevel::Auto,
                DiagnosticsKind::Full => DiagnosticsLevel::Full,
            };
        }
        config.truncation = self.truncation;
        config.threads = self.threads.unwrap_or(0);
        config.ladder = self.ladder.unwrap_or_default();
        config.limit_samples = self.limit_samples.unwrap_or(config.limit_samples);
        config.out_dir = self.out;
        config.validate()?;
        Ok(config)
    }
}

/// Reads and validates a config file, applying the documented defaults.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            Error::Config(inner.to_string())
        } else {
            Error::Config(format!("{path}: {inner}"))
        }
    })?;
    raw.into_config()
}

/// SHA-256 of the config file bytes.
pub fn config_hash(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub files: Vec<ManifestEntry>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write_manifest(
    dir: &Path,
    command: &str,
    hash: String,
    started_at: f64,
    files: &[&str],
) -> Result<()> {
    let mut entries = Vec::new();
    for &f in files {
        let meta = fs::metadata(dir.join(f))?;
        entries.push(ManifestEntry {
            file: f.to_string(),
            bytes: meta.len(),
        });
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config_hash: hash,
        started_at,
        finished_at: now(),
        files: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

#[derive(Debug, Parser)]
#[command(
    name = "eigfluct",
    version,
    about = "Eigenvalue fluctuations of dense graphon random graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct CommonArgs {
    /// JSON config file.
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compute every per-replication diagnostic.
    #[arg(long)]
    full_diagnostics: bool,
    /// Also write replication 0's latents and spectra.
    #[arg(long)]
    dump_draw: bool,
    /// Worker threads, 0 for automatic.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Population spectrum, regime constants and limit law.
    Spectrum(CommonArgs),
    /// Monte Carlo experiment with per-replication table and summary.
    Simulate(CommonArgs),
    /// Quantiles of the limit law.
    Limit(CommonArgs),
    /// Adjacency versus kernel eigenvalues along a size ladder.
    Compare(CommonArgs),
    /// Checks the config and the model.
    Validate(CommonArgs),
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = parse_config(&self.config)?;
        if let Some(out) = &self.out {
            config.out_dir = Some(out.clone());
        }
        if self.full_diagnostics {
            config.diagnostics = DiagnosticsLevel::Full;
        }
        if let Some(t) = self.threads {
            config.threads = t;
        }
        config.dump_draw = self.dump_draw;
        Ok(config)
    }
}

#[derive(Serialize)]
struct SpectrumOutput {
    model: GraphonModel,
    spectrum: SpectrumSummary,
    constants: RegimeConstants,
    law: LimitLaw,
    /// Both sides of the coefficient square-summability bound.
    coefficient_bound: (f64, f64),
}

#[derive(Serialize)]
struct LimitOutput {
    law: LimitLaw,
    variance: f64,
    cdf_accuracy: f64,
    quantiles: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct ValidationOutput {
    valid: bool,
    errors: Vec<String>,
    config: Option<ExperimentConfig>,
}

/// Prints `value` as JSON, or writes it to `dir/file` with a manifest.
fn emit<T: Serialize>(
    value: &T,
    dir: Option<&Path>,
    file: &str,
    command: &str,
    args: &CommonArgs,
    started: f64,
) -> Result<()> {
    match dir {
        Some(dir) => {
            experiment::report::ensure_writable(dir)?;
            write_json(&dir.join(file), value)?;
            write_manifest(dir, command, config_hash(&args.config)?, started, &[file])
        }
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?
            );
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<i32> {
    let started = now();
    match command {
        Command::Validate(args) => {
            let out = match args.load() {
                Ok(config) => ValidationOutput {
                    valid: true,
                    errors: Vec::new(),
                    config: Some(config),
                },
                Err(e) if e.is_validation() => ValidationOutput {
                    valid: false,
                    errors: vec![e.to_string()],
                    config: None,
                },
                Err(e) => return Err(e),
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&out).map_err(|e| Error::Io(e.to_string()))?
            );
            Ok(if out.valid { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Spectrum(args) => {
            let config = args.load()?;
            let setup = experiment::prepare(&config)?;
            let out = SpectrumOutput {
                model: config.model.clone(),
                spectrum: SpectrumSummary::new(&setup.spec),
                coefficient_bound: coefficient_bound(&setup.spec, &setup.constants),
                constants: setup.constants,
                law: setup.law,
            };
            emit(
                &out,
                config.out_dir.as_deref(),
                "spectrum.json",
                "spectrum",
                &args,
                started,
            )?;
            Ok(EXIT_OK)
        }
        Command::Limit(args) => {
            let config = args.load()?;
            let setup = experiment::prepare(&config)?;
            let quantiles = QUANTILE_LEVELS
                .iter()
                .map(|&p| law_quantile(&setup.law, p).map(|q| (p, q)))
                .collect::<Result<Vec<_>>>()?;
            let out = LimitOutput {
                variance: setup.law.variance(),
                cdf_accuracy: setup.law.cdf_accuracy(),
                law: setup.law,
                quantiles,
            };
            emit(
                &out,
                config.out_dir.as_deref(),
                "limit.json",
                "limit",
                &args,
                started,
            )?;
            Ok(EXIT_OK)
        }
        Command::Simulate(args) => {
            let config = args.load()?;
            let report = run_experiment(&config)?;
            match &config.out_dir {
                Some(dir) => {
                    let mut files = vec![experiment::RECORDS_FILE, experiment::SUMMARY_FILE];
                    if config.dump_draw {
                        files.push(experiment::DRAW_FILE);
                    }
                    write_manifest(dir, "simulate", config_hash(&args.config)?, started, &files)?;
                }
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?
                ),
            }
            Ok(match report.status {
                ReportStatus::Ok => EXIT_OK,
                ReportStatus::ExperimentQuality(msg) => {
                    eprintln!("eigfluct: experiment quality: {msg}");
                    EXIT_FAILURE
                }
            })
        }
        Command::Compare(args) => {
            let mut config = args.load()?;
            config.source = MatrixSource::Both;
            let comparison = adjacency_comparison(&config)?;
            match &config.out_dir {
                Some(dir) => {
                    let names: Vec<String> = comparison
                        .levels
                        .iter()
                        .map(|l| format!("records_n{}.csv", l.n))
                        .chain([experiment::COMPARISON_FILE.to_string()])
                        .collect();
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    write_manifest(dir, "compare", config_hash(&args.config)?, started, &refs)?;
                }
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&comparison)
                        .map_err(|e| Error::Io(e.to_string()))?
                ),
            }
            let degraded = comparison
                .levels
                .iter()
                .any(|l| l.status != ReportStatus::Ok);
            Ok(if degraded { EXIT_FAILURE } else { EXIT_OK })
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_VALIDATION,
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("eigfluct: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_FAILURE
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(
            r#"{"model":"power_kernel","alpha":0.5,"r":1,"n":500,"replications":100,"seed":1}"#,
        )
        .unwrap();
        assert_eq!(c.model, GraphonModel::PowerKernel { alpha: 0.5 });
        assert_eq!(c.source, MatrixSource::Kernel);
        assert_eq!(c.spectrum, SpectrumMethod::Analytic);
        assert_eq!(c.diagnostics, DiagnosticsLevel::Auto);
        assert_eq!(
            (c.threads, c.limit_samples, c.truncation),
            (0, 100_000, None)
        );
    }

    #[test]
    fn alpha_out_of_range() {
        let e = parse_config_str(
            r#"{"model":"power_kernel","alpha":1.5,"r":1,"n":500,"replications":100,"seed":1}"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("alpha must lie in (0,1)"), "{e}");
    }

    #[test]
    fn brownian_adjacency_rejected() {
        let e = parse_config_str(
            r#"{"model":"brownian_sqrt","source":"adjacency","r":1,"n":500,"replications":100,"seed":1}"#,
        )
        .unwrap_err();
        assert!(
            e.to_string()
                .contains("edge sampling requires sup norm ≤ 1"),
            "{e}"
        );
    }

    #[test]
    fn unknown_and_misplaced_keys() {
        let e = parse_config_str(
            r#"{"model":"power_kernel","alpah":0.5,"r":1,"n":500,"replications":100,"seed":1}"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("alpah"), "{e}");
        let e = parse_config_str(r#"{"model":"symmetric_sbm","p":0.6,"q":0.2,"alpha":0.5,"r":2,"n":500,"replications":100,"seed":1}"#)
            .unwrap_err();
        assert!(
            e.to_string()
                .contains("alpha: not used by model symmetric_sbm"),
            "{e}"
        );
    }

    #[test]
    fn type_errors_name_the_field() {
        let e = parse_config_str(
            r#"{"model":"power_kernel","alpha":0.5,"r":1,"n":"many","replications":100,"seed":1}"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("n: invalid type"), "{e}");
    }

    #[test]
    fn brownian_defaults_to_nystrom() {
        let c = parse_config_str(
            r#"{"model":"brownian_sqrt","r":1,"n":100,"replications":10,"seed":1}"#,
        )
        .unwrap();
        assert!(matches!(
            c.spectrum,
            SpectrumMethod::Nystrom {
                nodes: 1024,
                modes: 50
            }
        ));
    }
}
