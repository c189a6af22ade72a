use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datasets::GroupedDataset;
use crate::error::{Error, Result};

/// Gaussian toy family: `x = (y·μ₁, z·μ₂) + ξ`, `ξ ~ N(0, I)`, with
/// `y, z ∈ {−1, +1}` and `E[yz] = σ_yz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub sigma_yz: f64,
}

/// Default norm of the class-mean block.
pub const DEFAULT_MU1_NORM: f64 = 2.4;
/// Default norm of the spurious-mean block; exceeds √3 × the class block.
pub const DEFAULT_MU2_NORM: f64 = 10.0;
pub const DEFAULT_BLOCK_DIM: usize = 5;

impl ToySpec {
    /// Constant-direction means `μ = (norm/√d)·1` in each block.
    pub fn with_norms(block_dim: usize, mu1_norm: f64, mu2_norm: f64, sigma_yz: f64) -> Self {
        let scale = |norm: f64| norm / (block_dim as f64).sqrt();
        Self {
            mu1: vec![scale(mu1_norm); block_dim],
            mu2: vec![scale(mu2_norm); block_dim],
            sigma_yz,
        }
    }

    pub fn default_with_sigma(sigma_yz: f64) -> Self {
        Self::with_norms(DEFAULT_BLOCK_DIM, DEFAULT_MU1_NORM, DEFAULT_MU2_NORM, sigma_yz)
    }

    pub fn dim(&self) -> usize {
        self.mu1.len() + self.mu2.len()
    }

    /// Probability that the attribute agrees with the label.
    pub fn agreement_probability(&self) -> f64 {
        (1.0 + self.sigma_yz) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_yz.abs() <= 1.0) {
            return Err(Error::Validation(format!(
                "correlation must lie in [-1, 1], got {}",
                self.sigma_yz
            )));
        }
        if self.mu1.iter().all(|&v| v == 0.0) || self.mu2.iter().all(|&v| v == 0.0) {
            return Err(Error::Validation("mean directions must be nonzero".into()));
        }
        Ok(())
    }
}

/// Draws `n` samples; labels and attributes are stored as indices
/// (0 ↦ −1, 1 ↦ +1).
pub fn gen_toy(spec: &ToySpec, n: usize, seed: u64) -> Result<GroupedDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Validation("toy dataset needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agree = spec.agreement_probability();
    let dim = spec.dim();
    let mut features = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let y: usize = if rng.random::<bool>() { 1 } else { 0 };
        let z = if rng.random::<f64>() < agree { y } else { 1 - y };
        let sy = if y == 1 { 1.0 } else { -1.0 };
        let sz = if z == 1 { 1.0 } else { -1.0 };
        for &m in &spec.mu1 {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features.push(sy * m + noise);
        }
        for &m in &spec.mu2 {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features.push(sz * m + noise);
        }
        ys.push(y);
        zs.push(z);
    }
    GroupedDataset::new(
        dim,
        features,
        ys,
        Some(zs),
        2,
        2,
        format!("toy(sigma={}, n={n}, seed={seed})", spec.sigma_yz),
    )
}
