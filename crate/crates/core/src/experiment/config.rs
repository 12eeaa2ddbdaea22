use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphon::GraphonModel;
use crate::sample::MAX_N;
use crate::spectrum::{analytic_spectrum, nystrom_spectrum, SpectralData};

pub const MIN_N: usize = 50;
pub const MIN_REPLICATIONS: usize = 10;
pub const DEFAULT_LIMIT_SAMPLES: usize = 100_000;
pub const DEFAULT_NYSTROM_NODES: usize = 1024;
pub const DEFAULT_NYSTROM_MODES: usize = 50;

/// Which random matrices a replication draws and eigensolves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixSource {
    Kernel,
    Adjacency,
    Both,
}

impl MatrixSource {
    pub fn uses_kernel(self) -> bool {
        self != MatrixSource::Adjacency
    }

    pub fn uses_adjacency(self) -> bool {
        self != MatrixSource::Kernel
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SpectrumMethod {
    Analytic,
    Nystrom { nodes: usize, modes: usize },
}

impl SpectrumMethod {
    /// Closed form where one exists, otherwise a Nyström discretization.
    pub fn default_for(model: &GraphonModel) -> Self {
        match model {
            GraphonModel::Block(_) | GraphonModel::PowerKernel { .. } => SpectrumMethod::Analytic,
            _ => SpectrumMethod::Nystrom {
                nodes: DEFAULT_NYSTROM_NODES,
                modes: DEFAULT_NYSTROM_MODES,
            },
        }
    }

    pub fn compute(&self, model: &GraphonModel) -> Result<SpectralData> {
        match *self {
            SpectrumMethod::Analytic => analytic_spectrum(model),
            SpectrumMethod::Nystrom { nodes, modes } => nystrom_spectrum(model, nodes, modes),
        }
    }
}

/// Per-replication diagnostics.
///
/// `Auto` computes the cheap diagnostics always and adds cross-projections
/// and the resolvent correction in the degenerate regime; `Full` adds them
/// in every regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticsLevel {
    Off,
    Auto,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: GraphonModel,
    /// One-based target index in the `|λ|` ordering.
    pub r: usize,
    pub source: MatrixSource,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub spectrum: SpectrumMethod,
    pub diagnostics: DiagnosticsLevel,
    /// Modes entering `C_r` and the chi-square series; `None` keeps all.
    pub truncation: Option<usize>,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    /// Sizes for the adjacency comparison; empty means `n/4, n/2, n`.
    pub ladder: Vec<usize>,
    /// Limit-law draws for two-sample tests.
    pub limit_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Also write replication 0's latents and spectra.
    pub dump_draw: bool,
}

impl ExperimentConfig {
    /// A kernel-only experiment with default settings.
    pub fn new(model: GraphonModel, r: usize, n: usize, replications: usize, seed: u64) -> Self {
        let spectrum = SpectrumMethod::default_for(&model);
        ExperimentConfig {
            model,
            r,
            source: MatrixSource::Kernel,
            n,
            replications,
            seed,
            spectrum,
            diagnostics: DiagnosticsLevel::Auto,
            truncation: None,
            threads: 0,
            ladder: Vec::new(),
            limit_samples: DEFAULT_LIMIT_SAMPLES,
            out_dir: None,
            dump_draw: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.ensure_valid()?;
        if self.r == 0 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        if !(MIN_N..=MAX_N).contains(&self.n) {
            return Err(Error::Config(format!(
                "n must lie in {MIN_N}..={MAX_N}, got {}",
                self.n
            )));
        }
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::Config(format!(
                "replications must be at least {MIN_REPLICATIONS}, got {}",
                self.replications
            )));
        }
        if self.source.uses_adjacency() && !self.model.edge_sampling_allowed() {
            return Err(Error::Config(format!(
                "edge sampling requires sup norm ≤ 1, {} has sup norm {}",
                self.model.name(),
                self.model.sup_norm_bound()
            )));
        }
        if let Some(k) = self.truncation {
            if k < self.r {
                return Err(Error::Config(format!(
                    "truncation {k} must be at least r = {}",
                    self.r
                )));
            }
        }
        if self.limit_samples < MIN_REPLICATIONS {
            return Err(Error::Config("limit_samples must be at least 10".into()));
        }
        check_ladder(&self.ladder)?;
        Ok(())
    }

    pub fn ladder_sizes(&self) -> Vec<usize> {
        if self.ladder.is_empty() {
            vec![self.n / 4, self.n / 2, self.n]
        } else {
            self.ladder.clone()
        }
    }
}

pub(crate) fn check_ladder(ladder: &[usize]) -> Result<()> {
    if ladder.windows(2).any(|w| w[0] >= w[1])
        || ladder.iter().any(|&m| !(MIN_N..=MAX_N).contains(&m))
    {
        return Err(Error::Config(format!(
            "ladder {ladder:?} must be strictly increasing within {MIN_N}..={MAX_N}"
        )));
    }
    Ok(())
}
