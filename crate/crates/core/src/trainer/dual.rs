use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::smoothed_max_weights;

/// Moving-average estimate `F` with its smoothed maximiser `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVector {
    pub f: Vec<f64>,
    pub u: Vec<f64>,
}

impl DualVector {
    /// `F = 0` and the matching uniform `u`.
    pub fn zeros(len: usize) -> Self {
        Self {
            f: vec![0.0; len],
            u: vec![1.0 / len.max(1) as f64; len],
        }
    }
}

/// Inner-maximisation state carried between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualState {
    /// Methods without an inner problem.
    Inactive,
    /// One pairwise-difference vector of length `K_z²` per class.
    Pairwise(Vec<DualVector>),
    /// One per-sample moving-average loss vector of length `n_k` per class.
    PerSample(Vec<Vec<f64>>),
    /// GroupDRO weights over `(y, z)` groups, row-major.
    GroupWeights(Vec<f64>),
}

/// `F ← (1−γ)F + γF̂` on the entries selected by `mask` (all when `None`),
/// then `u ← softmax(F/ρ)`.
pub fn dual_update(dual: &mut DualVector, f_hat: &[f64], mask: Option<&[bool]>, gamma: f64, rho: f64) -> Result<()> {
    if f_hat.len() != dual.f.len() || mask.is_some_and(|m| m.len() != dual.f.len()) {
        return Err(Error::Dimension {
            context: "dual update",
            left: vec![dual.f.len()],
            right: vec![f_hat.len(), mask.map_or(f_hat.len(), <[bool]>::len)],
        });
    }
    moving_average(&mut dual.f, f_hat, mask, gamma);
    dual.u = smoothed_max_weights(&dual.f, rho)?;
    Ok(())
}

pub(crate) fn moving_average(f: &mut [f64], f_hat: &[f64], mask: Option<&[bool]>, gamma: f64) {
    for (j, (fj, &hj)) in f.iter_mut().zip(f_hat).enumerate() {
        if mask.is_none_or(|m| m[j]) {
            *fj = (1.0 - gamma) * *fj + gamma * hj;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_memoryless_update() {
        let mut d = DualVector::zeros(3);
        dual_update(&mut d, &[1.0, -2.0, 0.5], None, 1.0, 0.1).unwrap();
        assert_eq!(d.f, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn half_step() {
        let mut d = DualVector::zeros(2);
        dual_update(&mut d, &[2.0, -2.0], None, 0.5, 1.0).unwrap();
        assert_eq!(d.f, vec![1.0, -1.0]);
        assert!((d.u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_entries_are_kept() {
        let mut d = DualVector {
            f: vec![1.0, 5.0],
            u: vec![0.5, 0.5],
        };
        dual_update(&mut d, &[3.0, f64::NAN], Some(&[true, false]), 0.5, 1.0).unwrap();
        assert_eq!(d.f, vec![2.0, 5.0]);
    }

    #[test]
    fn shape_mismatch() {
        let mut d = DualVector::zeros(2);
        assert!(dual_update(&mut d, &[1.0], None, 0.5, 1.0).is_err());
    }
}
