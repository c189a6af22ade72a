use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::GroupedDataset;
use crate::error::{Error, Result};

/// Largest support the exact oracles will enumerate.
pub const MAX_SUPPORT: usize = 64;

/// Finite joint law of `(X, Y, Z)` factored as `P_Y · P_{Z|Y} · P_{X|Y,Z}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistributionSpec {
    pub support: Vec<Vec<f64>>,
    pub p_y: Vec<f64>,
    /// `p_z_given_y[k][z]`.
    pub p_z_given_y: Vec<Vec<f64>>,
    /// `p_x_given_yz[k][z][x]`, indexed by support position.
    pub p_x_given_yz: Vec<Vec<Vec<f64>>>,
    /// Upper bound on the loss used with this spec.
    pub loss_bound: f64,
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl DiscreteDistributionSpec {
    pub fn k_y(&self) -> usize {
        self.p_y.len()
    }

    pub fn k_z(&self) -> usize {
        self.p_z_given_y.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.support.len();
        if m == 0 || m > MAX_SUPPORT {
            return Err(Error::Validation(format!("support size {m} outside [1, {MAX_SUPPORT}]")));
        }
        let dim = self.support[0].len();
        if self.support.iter().any(|x| x.len() != dim) {
            return Err(Error::Validation("support points differ in dimension".into()));
        }
        check_simplex(&self.p_y, "P_Y")?;
        let k_z = self.k_z();
        if k_z == 0 || self.p_z_given_y.len() != self.k_y() || self.p_x_given_yz.len() != self.k_y() {
            return Err(Error::Validation("conditional tables do not match the class count".into()));
        }
        for k in 0..self.k_y() {
            if self.p_z_given_y[k].len() != k_z || self.p_x_given_yz[k].len() != k_z {
                return Err(Error::Validation(format!("class {k} has a ragged attribute table")));
            }
            check_simplex(&self.p_z_given_y[k], &format!("P_Z|Y={k}"))?;
            for z in 0..k_z {
                if self.p_x_given_yz[k][z].len() != m {
                    return Err(Error::Validation(format!("P_X|Y={k},Z={z} has the wrong length")));
                }
                check_simplex(&self.p_x_given_yz[k][z], &format!("P_X|Y={k},Z={z}"))?;
            }
        }
        Ok(())
    }

    /// Same spec with `P_{Z|Y}` replaced; the correlation-shift family.
    pub fn with_attribute_conditional(&self, q_z_given_y: Vec<Vec<f64>>) -> Result<Self> {
        let spec = Self {
            p_z_given_y: q_z_given_y,
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `E[L(X, k) | Y = k, Z = z]` for every group.
    pub fn conditional_expected_losses(&self, loss: &dyn Fn(&[f64], usize) -> f64) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        Ok((0..self.k_y())
            .map(|k| {
                (0..self.k_z())
                    .map(|z| {
                        self.support
                            .iter()
                            .zip(&self.p_x_given_yz[k][z])
                            .map(|(x, &p)| if p > 0.0 { p * loss(x, k) } else { 0.0 })
                            .sum()
                    })
                    .collect()
            })
            .collect())
    }

    /// `E_P[L(X, Y)]`.
    pub fn population_risk(&self, loss: &dyn Fn(&[f64], usize) -> f64) -> Result<f64> {
        let cond = self.conditional_expected_losses(loss)?;
        Ok((0..self.k_y())
            .map(|k| {
                self.p_y[k]
                    * (0..self.k_z())
                        .map(|z| self.p_z_given_y[k][z] * cond[k][z])
                        .sum::<f64>()
            })
            .sum())
    }

    /// Draws `n` i.i.d. samples; features are the chosen support points.
    pub fn sample(&self, n: usize, seed: u64) -> Result<GroupedDataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let invalid = |e: rand::distr::weighted::Error| Error::Validation(format!("sampling weights: {e}"));
        let y_dist = WeightedIndex::new(&self.p_y).map_err(invalid)?;
        let z_dists = self
            .p_z_given_y
            .iter()
            .map(|p| WeightedIndex::new(p).map_err(invalid))
            .collect::<Result<Vec<_>>>()?;
        let x_dists = self
            .p_x_given_yz
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| WeightedIndex::new(p).map_err(invalid))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let dim = self.support[0].len();
        let mut features = Vec::with_capacity(n * dim);
        let mut ys = Vec::with_capacity(n);
        let mut zs = Vec::with_capacity(n);
        for _ in 0..n {
            let k = y_dist.sample(&mut rng);
            let z = z_dists[k].sample(&mut rng);
            let x = x_dists[k][z].sample(&mut rng);
            features.extend_from_slice(&self.support[x]);
            ys.push(k);
            zs.push(z);
        }
        GroupedDataset::new(
            dim,
            features,
            ys,
            Some(zs),
            self.k_y(),
            self.k_z(),
            format!("discrete(n={n}, seed={seed})"),
        )
    }
}

/// Exact `Σ_k P_Y(k) (max_z E[L|k,z] − min_z E[L|k,z])` by enumeration.
pub fn population_csv_oracle(spec: &DiscreteDistributionSpec, loss: &dyn Fn(&[f64], usize) -> f64) -> Result<f64> {
    let cond = spec.conditional_expected_losses(loss)?;
    Ok(cond
        .iter()
        .zip(&spec.p_y)
        .map(|(row, &p)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            p * (max - min)
        })
        .sum())
}
