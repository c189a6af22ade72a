use serde::{Deserialize, Serialize};

use crate::datasets::GroupIndex;
use crate::error::{Error, Result};

/// Per-group mean losses with the counts and class proportions behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLossStats {
    /// `mean_loss[k][z]`, `None` for an empty group or hidden attributes.
    pub mean_loss: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
    pub p_hat: Vec<f64>,
    /// Per-sample losses grouped by class.
    pub per_sample: Vec<Vec<f64>>,
}

pub fn group_mean_losses(losses: &[f64], index: &GroupIndex) -> Result<GroupLossStats> {
    if losses.len() != index.n() {
        return Err(Error::Dimension {
            context: "per-sample losses vs index",
            left: vec![losses.len()],
            right: vec![index.n()],
        });
    }
    let mut mean_loss = vec![vec![None; index.k_z()]; index.k_y()];
    let mut counts = vec![vec![0; index.k_z()]; index.k_y()];
    for k in 0..index.k_y() {
        for z in 0..index.k_z() {
            let ids = index.group(k, z);
            counts[k][z] = ids.len();
            if !ids.is_empty() {
                mean_loss[k][z] = Some(ids.iter().map(|&i| losses[i]).sum::<f64>() / ids.len() as f64);
            }
        }
    }
    let per_sample = (0..index.k_y())
        .map(|k| index.class(k).iter().map(|&i| losses[i]).collect())
        .collect();
    Ok(GroupLossStats {
        mean_loss,
        counts,
        p_hat: index.p_hat(),
        per_sample,
    })
}

fn class_means(stats: &GroupLossStats, k: usize) -> Result<Vec<f64>> {
    stats.mean_loss[k]
        .iter()
        .enumerate()
        .map(|(z, m)| m.ok_or(Error::EmptyGroup { class: k, attr: z }))
        .collect()
}

/// `Σ_k p̂_k (max_z L̂_kz − min_z L̂_kz)`.
pub fn empirical_csv(stats: &GroupLossStats) -> Result<f64> {
    let mut total = 0.0;
    for (k, &p) in stats.p_hat.iter().enumerate() {
        let means = class_means(stats, k)?;
        let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().copied().fold(f64::INFINITY, f64::min);
        total += p * (max - min);
    }
    Ok(total)
}

/// `Σ_k p̂_k (max_i L_i − min_i L_i)` over the samples of each class.
pub fn csv_unobserved(per_class_losses: &[Vec<f64>], p_hat: &[f64]) -> Result<f64> {
    if per_class_losses.len() != p_hat.len() {
        return Err(Error::Dimension {
            context: "per-class losses vs class proportions",
            left: vec![per_class_losses.len()],
            right: vec![p_hat.len()],
        });
    }
    let mut total = 0.0;
    for (k, (losses, &p)) in per_class_losses.iter().zip(p_hat).enumerate() {
        if losses.is_empty() {
            return Err(Error::EmptyClass(k));
        }
        let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
        total += p * (max - min);
    }
    Ok(total)
}

/// Ordered-pair differences `L̂_{k z₁} − L̂_{k z₂}`, row-major in `(z₁, z₂)`.
pub fn pairwise_f_observed(stats: &GroupLossStats, k: usize) -> Result<Vec<f64>> {
    let means = class_means(stats, k)?;
    Ok(pairwise_differences(&means))
}

pub fn pairwise_differences(means: &[f64]) -> Vec<f64> {
    means
        .iter()
        .flat_map(|&a| means.iter().map(move |&b| a - b))
        .collect()
}
