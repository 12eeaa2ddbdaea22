//! One realization of the graphon model: latent positions, the zero-diagonal
//! kernel matrix, and optionally a Bernoulli adjacency matrix.
//!
//! All randomness comes from ChaCha streams keyed by the master seed; the
//! 64-bit stream id encodes the replication index and a stream label, so
//! replications are independent and can be generated in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::graphon::GraphonModel;
use crate::matrix::Matrix;

/// Largest matrix dimension accepted by experiment configs.
pub const MAX_N: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamLabel {
    Latents = 1,
    Edges = 2,
    Limit = 3,
    Diagnostics = 4,
}

/// Address of one deterministic random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub replication: u64,
    pub label: StreamLabel,
}

impl StreamKey {
    pub fn new(seed: u64, replication: u64, label: StreamLabel) -> Self {
        StreamKey {
            seed,
            replication,
            label,
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        assert!(self.replication < 1 << 56, "replication index too large");
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(b"eigfluct");
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream((self.replication << 8) | self.label as u64);
        rng
    }
}

/// `n` i.i.d. `Unif[0,1)` latent positions.
pub fn draw_latents<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 vertices, got {n}"
        )));
    }
    Ok((0..n).map(|_| rng.random::<f64>()).collect())
}

fn check_latents(latents: &[f64]) -> Result<()> {
    if let Some((i, u)) = latents
        .iter()
        .enumerate()
        .find(|(_, u)| !(0.0..=1.0).contains(*u))
    {
        return Err(Error::Domain(format!("latent {i} = {u} outside [0, 1]")));
    }
    Ok(())
}

/// `K_n` with `(K_n)_ij = W(U_i, U_j)` off the diagonal and zero on it.
pub fn kernel_matrix(model: &GraphonModel, latents: &[f64]) -> Result<Matrix> {
    check_latents(latents)?;
    let n = latents.len();
    let w = model.evaluator();
    let mut k = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..i {
            let v = w(latents[i], latents[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    debug_assert!(
        k.max_row_sum() <= (n as f64 - 1.0) * model.sup_norm_bound() * (1.0 + 1e-12),
        "row-sum bound violated"
    );
    Ok(k)
}

/// Symmetric 0/1 adjacency with independent `Bernoulli(W(U_i,U_j))` edges for `i < j`.
pub fn adjacency_matrix<R: Rng + ?Sized>(
    model: &GraphonModel,
    latents: &[f64],
    rng: &mut R,
) -> Result<Matrix> {
    if !model.edge_sampling_allowed() {
        return Err(Error::InvalidProbability(format!(
            "edge sampling requires sup norm ≤ 1, {} has sup norm {}",
            model.name(),
            model.sup_norm_bound()
        )));
    }
    check_latents(latents)?;
    let n = latents.len();
    let w = model.evaluator();
    let mut a = Matrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < w(latents[i], latents[j]) {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    Ok(a)
}

/// One replication's random inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDraw {
    pub n: usize,
    pub latents: Vec<f64>,
    pub kernel: Matrix,
    pub adjacency: Option<Matrix>,
    pub seed: u64,
    pub replication: u64,
}

impl SampleDraw {
    /// Draws latents and `K_n` (and `A_n` when `with_adjacency`) for one replication.
    pub fn generate(
        model: &GraphonModel,
        n: usize,
        seed: u64,
        replication: u64,
        with_adjacency: bool,
    ) -> Result<Self> {
        let mut latent_rng = StreamKey::new(seed, replication, StreamLabel::Latents).rng();
        let latents = draw_latents(n, &mut latent_rng)?;
        let kernel = kernel_matrix(model, &latents)?;
        let adjacency = if with_adjacency {
            let mut edge_rng = StreamKey::new(seed, replication, StreamLabel::Edges).rng();
            Some(adjacency_matrix(model, &latents, &mut edge_rng)?)
        } else {
            None
        };
        Ok(SampleDraw {
            n,
            latents,
            kernel,
            adjacency,
            seed,
            replication,
        })
    }
}
