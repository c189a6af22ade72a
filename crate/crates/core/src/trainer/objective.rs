use serde::{Deserialize, Serialize};

use crate::datasets::GroupIndex;
use crate::datasets::GroupedDataset;
use crate::error::{Error, Result};
use crate::grad::{ModelParams, Tape};
use crate::metrics::pairwise_differences;
use crate::trainer::{smoothed_max_value, smoothed_max_weights};

/// Full-batch smoothed objective and its gradient at the inner maximiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiEvaluation {
    /// `R_emp + λ Σ_k p̂_k ρ log mean exp(F^k/ρ)`.
    pub value: f64,
    /// Same with the hard maximum `max_j F^k_j`.
    pub hard_value: f64,
    pub grad_norm_sq: f64,
    pub gradient: ModelParams,
}

/// Evaluates the smoothed minimax objective on the full training set with
/// the inner maximiser in closed form; the gradient treats `u*` as fixed.
pub fn phi_rho_full(
    dataset: &GroupedDataset,
    index: &GroupIndex,
    params: &ModelParams,
    lambda: f64,
    rho: f64,
) -> Result<PhiEvaluation> {
    if !index.census_complete() {
        let (class, attr) = index.first_empty_group().unwrap_or((0, 0));
        return Err(Error::EmptyGroup { class, attr });
    }
    let n = dataset.len();
    let ids: Vec<usize> = (0..n).collect();
    let mut tape = Tape::new();
    let (logits, bound) = params.forward(&mut tape, &dataset.all_features())?;
    let ce = tape.cross_entropy(logits, dataset.labels())?;
    let losses = tape.value(ce).data().to_vec();
    let (k_y, k_z) = (index.k_y(), index.k_z());
    let p_hat = index.p_hat();
    let attrs = dataset.attributes().expect("census implies attributes");
    let risk = losses.iter().sum::<f64>() / n as f64;
    let mut coefs = vec![1.0 / n as f64; n];
    let (mut soft, mut hard) = (0.0, 0.0);
    if lambda > 0.0 {
        let mut group_coef = vec![0.0; k_y * k_z];
        for k in 0..k_y {
            let means: Vec<f64> = (0..k_z)
                .map(|z| index.group(k, z).iter().map(|&i| losses[i]).sum::<f64>() / index.n_kz(k, z) as f64)
                .collect();
            let f = pairwise_differences(&means);
            soft += p_hat[k] * smoothed_max_value(&f, rho)?;
            hard += p_hat[k] * f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let u = smoothed_max_weights(&f, rho)?;
            for z in 0..k_z {
                let out: f64 = (0..k_z).map(|z2| u[z * k_z + z2]).sum();
                let inc: f64 = (0..k_z).map(|z1| u[z1 * k_z + z]).sum();
                group_coef[k * k_z + z] = lambda * p_hat[k] * (out - inc) / index.n_kz(k, z) as f64;
            }
        }
        for &i in &ids {
            coefs[i] += group_coef[dataset.labels()[i] * k_z + attrs[i]];
        }
    }
    let root = tape.weighted_sum(ce, &coefs)?;
    let grads = tape.backward(root)?;
    let gradient = params.gradient_of(&grads, &bound);
    Ok(PhiEvaluation {
        value: risk + lambda * soft,
        hard_value: risk + lambda * hard,
        grad_norm_sq: gradient.norm_sq(),
        gradient,
    })
}
