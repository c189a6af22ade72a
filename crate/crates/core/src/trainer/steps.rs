use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{build_group_index, sample_batch, GroupIndex, GroupedDataset, SamplerStrategy};
use crate::error::{Error, Result};
use crate::grad::{sgd_step, Architecture, ModelParams, Tape};
use crate::metrics::pairwise_differences;
use crate::rng::{stream_rng, STREAM_INIT, STREAM_PENALTY_BATCH, STREAM_UNIFORM_BATCH};
use crate::trainer::dual::moving_average;
use crate::trainer::{dual_update, label_shift_weights, smooth_range_penalty, DualState, DualVector};
use crate::trainer::{LabelShift, Method, TrainConfig};

/// Training set with the lookups every step needs.
#[derive(Debug, Clone)]
pub struct TrainData<'a> {
    pub dataset: &'a GroupedDataset,
    pub index: GroupIndex,
    p_hat: Vec<f64>,
    /// Position of each sample inside its class list.
    positions: Vec<usize>,
    class_weights: Vec<f64>,
}

impl<'a> TrainData<'a> {
    pub fn new(dataset: &'a GroupedDataset, config: &TrainConfig) -> Result<Self> {
        let index = build_group_index(dataset);
        if let Some(k) = (0..index.k_y()).find(|&k| index.n_k(k) == 0) {
            return Err(Error::EmptyClass(k));
        }
        let needs_groups = config.method.needs_attributes() || config.sampler() == SamplerStrategy::GroupBalanced;
        if needs_groups {
            if !index.attributes_observed() {
                return Err(Error::Unsupported(format!(
                    "method {} needs observed spurious attributes",
                    config.method.name()
                )));
            }
            if let Some((class, attr)) = index.first_empty_group() {
                return Err(Error::EmptyGroup { class, attr });
            }
        }
        let mut positions = vec![0; dataset.len()];
        for k in 0..index.k_y() {
            for (p, &i) in index.class(k).iter().enumerate() {
                positions[i] = p;
            }
        }
        let p_hat = index.p_hat();
        let class_weights = match config.label_shift {
            LabelShift::Off => vec![1.0; index.k_y()],
            LabelShift::UniformClass => label_shift_weights(&p_hat)?,
        };
        Ok(Self {
            dataset,
            index,
            p_hat,
            positions,
            class_weights,
        })
    }

    pub fn p_hat(&self) -> &[f64] {
        &self.p_hat
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Value of the empirical-risk part of the objective on its batch.
    pub loss: f64,
    /// Penalty or robust-loss value on its batch (0 when none).
    pub penalty: f64,
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub params: ModelParams,
    pub dual: DualState,
    pub velocity: Option<ModelParams>,
    pub step: usize,
    pub trace: Vec<StepRecord>,
    pub(crate) uniform_rng: ChaCha8Rng,
    pub(crate) penalty_rng: ChaCha8Rng,
}

impl TrainerState {
    pub fn init(config: &TrainConfig, data: &TrainData<'_>) -> Result<Self> {
        config.validate()?;
        let mut init_rng = stream_rng(config.seed, STREAM_INIT);
        let (dim, k_y) = (data.dataset.dim(), data.index.k_y());
        let params = match config.architecture {
            Architecture::Linear => ModelParams::init_linear(dim, k_y, config.init_scale, &mut init_rng),
            Architecture::Mlp => ModelParams::init_mlp(dim, config.hidden, k_y, config.init_scale, &mut init_rng),
        };
        let k_z = data.index.k_z();
        let dual = match config.method {
            Method::Rcsv => DualState::Pairwise(vec![DualVector::zeros(k_z * k_z); k_y]),
            Method::RcsvU => DualState::PerSample((0..k_y).map(|k| vec![0.0; data.index.n_k(k)]).collect()),
            Method::GroupDro => DualState::GroupWeights(vec![1.0 / (k_y * k_z) as f64; k_y * k_z]),
            _ => DualState::Inactive,
        };
        Ok(Self {
            params,
            dual,
            velocity: None,
            step: 0,
            trace: Vec::new(),
            uniform_rng: stream_rng(config.seed, STREAM_UNIFORM_BATCH),
            penalty_rng: stream_rng(config.seed, STREAM_PENALTY_BATCH),
        })
    }
}

/// Per-sample losses on `ids`, plus the gradient of `Σ_i coef_i · loss_i`
/// where the coefficients may depend on the losses.
fn weighted_pass(
    params: &ModelParams,
    dataset: &GroupedDataset,
    ids: &[usize],
    coefs: impl FnOnce(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, f64, ModelParams)> {
    let mut tape = Tape::new();
    let (logits, bound) = params.forward(&mut tape, &dataset.batch_features(ids))?;
    let ce = tape.cross_entropy(logits, &dataset.batch_labels(ids))?;
    let losses = tape.value(ce).data().to_vec();
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("per-sample loss".into()));
    }
    let weights = coefs(&losses)?;
    let root = tape.weighted_sum(ce, &weights)?;
    let value = tape.value(root).data()[0];
    let grads = tape.backward(root)?;
    Ok((losses, value, params.gradient_of(&grads, &bound)))
}

/// Gradient of the (label-shift weighted) batch mean loss on a batch drawn
/// from the empirical-risk stream. Returns the batch ids as well.
fn erm_part(state: &mut TrainerState, config: &TrainConfig, data: &TrainData<'_>) -> Result<(Vec<usize>, f64, ModelParams)> {
    let ids = sample_batch(&data.index, config.sampler(), config.batch_size, &mut state.uniform_rng)?;
    let labels = data.dataset.labels();
    let scale = 1.0 / ids.len() as f64;
    let (_, value, grad) = weighted_pass(&state.params, data.dataset, &ids, |_| {
        Ok(ids.iter().map(|&i| data.class_weights[labels[i]] * scale).collect())
    })?;
    Ok((ids, value, grad))
}

fn apply_update(state: &mut TrainerState, config: &TrainConfig, grad: ModelParams, record: StepRecord) -> Result<()> {
    let (lr, _) = config.effective_rates();
    let direction = if config.momentum > 0.0 {
        let mut v = grad.zeros_like();
        if let Some(prev) = &state.velocity {
            v.axpy(config.momentum, prev);
        }
        v.axpy(1.0, &grad);
        state.velocity = Some(v.clone());
        v
    } else {
        grad
    };
    state.params = sgd_step(&state.params, &direction, lr, config.weight_decay)?;
    state.step += 1;
    state.trace.push(record);
    Ok(())
}

fn check_method(config: &TrainConfig, expected: &[Method]) -> Result<()> {
    if expected.contains(&config.method) {
        Ok(())
    } else {
        Err(Error::Contract(format!("step function does not handle method {}", config.method.name())))
    }
}

/// One RCSV update: empirical risk on a uniform batch plus
/// `λ Σ_k p̂_k u_kᵀ F^k` with `F^k` the moving average of pairwise group-mean
/// differences from a group-balanced batch; `u` is held fixed.
pub fn rcsv_step(state: &mut TrainerState, config: &TrainConfig, data: &TrainData<'_>) -> Result<()> {
    check_method(config, &[Method::Rcsv])?;
    let (_, loss, mut grad) = erm_part(state, config, data)?;
    let mut penalty = 0.0;
    if config.lambda > 0.0 {
        let (_, gamma) = config.effective_rates();
        let ids = sample_batch(&data.index, SamplerStrategy::GroupBalanced, config.batch_size, &mut state.penalty_rng)?;
        let (k_y, k_z) = (data.index.k_y(), data.index.k_z());
        let attrs = data.dataset.attributes().expect("checked at construction");
        let labels = data.dataset.labels();
        let DualState::Pairwise(duals) = &mut state.dual else {
            return Err(Error::Contract("rcsv needs pairwise dual state".into()));
        };
        let (_, _, pen_grad) = weighted_pass(&state.params, data.dataset, &ids, |losses| {
            let mut sums = vec![0.0; k_y * k_z];
            let mut counts = vec![0usize; k_y * k_z];
            for (pos, &i) in ids.iter().enumerate() {
                let g = labels[i] * k_z + attrs[i];
                sums[g] += losses[pos];
                counts[g] += 1;
            }
            let mut group_coef = vec![0.0; k_y * k_z];
            for (k, dual) in duals.iter_mut().enumerate() {
                let means: Vec<f64> = (0..k_z).map(|z| sums[k * k_z + z] / counts[k * k_z + z] as f64).collect();
                dual_update(dual, &pairwise_differences(&means), None, gamma, config.rho)?;
                penalty += data.p_hat[k] * dual.u.iter().zip(&dual.f).map(|(u, f)| u * f).sum::<f64>();
                for z in 0..k_z {
                    let out: f64 = (0..k_z).map(|z2| dual.u[z * k_z + z2]).sum();
                    let inc: f64 = (0..k_z).map(|z1| dual.u[z1 * k_z + z]).sum();
                    group_coef[k * k_z + z] =
                        config.lambda * data.p_hat[k] * (out - inc) / counts[k * k_z + z] as f64;
                }
            }
            Ok(ids.iter().map(|&i| group_coef[labels[i] * k_z + attrs[i]]).collect())
        })?;
        grad.axpy(1.0, &pen_grad);
    }
    apply_update(state, config, grad, StepRecord { loss, penalty })
}

/// One RCSV_U update: the per-class smoothed range of moving-average
/// per-sample losses replaces the group-mean differences, so attributes are
/// never read.
pub fn rcsvu_step(state: &mut TrainerState, config: &TrainConfig, data: &TrainData<'_>) -> Result<()> {
    check_method(config, &[Method::RcsvU])?;
    let (_, loss, mut grad) = erm_part(state, config, data)?;
    let mut penalty = 0.0;
    if config.lambda > 0.0 {
        let (_, gamma) = config.effective_rates();
        let mut ids = sample_batch(&data.index, SamplerStrategy::ClassBalanced, config.batch_size, &mut state.penalty_rng)?;
        ids.sort_unstable();
        ids.dedup();
        let labels = data.dataset.labels();
        let DualState::PerSample(per_class) = &mut state.dual else {
            return Err(Error::Contract("rcsv_u needs per-sample dual state".into()));
        };
        let (_, _, pen_grad) = weighted_pass(&state.params, data.dataset, &ids, |losses| {
            let mut coefs = vec![0.0; ids.len()];
            for (k, f) in per_class.iter_mut().enumerate() {
                let members: Vec<usize> = (0..ids.len()).filter(|&p| labels[ids[p]] == k).collect();
                if members.is_empty() {
                    continue;
                }
                let mut f_hat = vec![0.0; f.len()];
                let mut mask = vec![false; f.len()];
                for &p in &members {
                    let pos = data.positions[ids[p]];
                    f_hat[pos] = losses[p];
                    mask[pos] = true;
                }
                moving_average(f, &f_hat, Some(&mask), gamma);
                let sampled: Vec<f64> = members.iter().map(|&p| f[data.positions[ids[p]]]).collect();
                let (value, weights) = smooth_range_penalty(&sampled, config.rho)?;
                penalty += data.p_hat[k] * value;
                for (&p, w) in members.iter().zip(weights) {
                    coefs[p] = config.lambda * data.p_hat[k] * w;
                }
            }
            Ok(coefs)
        })?;
        grad.axpy(1.0, &pen_grad);
    }
    apply_update(state, config, grad, StepRecord { loss, penalty })
}

/// Population variance of per-sample losses within each class present in
/// the batch, averaged over those classes.
pub fn within_class_variance(losses: &[f64], labels: &[usize]) -> f64 {
    within_class_terms(losses, labels).0
}

/// Variance value and its derivative with respect to each loss.
fn within_class_terms(losses: &[f64], labels: &[usize]) -> (f64, Vec<f64>) {
    let k_max = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; k_max];
    let mut counts = vec![0usize; k_max];
    for (&l, &y) in losses.iter().zip(labels) {
        sums[y] += l;
        counts[y] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1) as f64;
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c.max(1) as f64).collect();
    let mut value = 0.0;
    let mut deriv = Vec::with_capacity(losses.len());
    for (&l, &y) in losses.iter().zip(labels) {
        let d = l - means[y];
        value += d * d / (counts[y] as f64 * present);
        deriv.push(2.0 * d / (counts[y] as f64 * present));
    }
    (value, deriv)
}

/// ERM, reweighted-sampling ERM, GroupDRO and the within-class variance
/// penalty.
pub fn baseline_step(state: &mut TrainerState, config: &TrainConfig, data: &TrainData<'_>) -> Result<()> {
    check_method(
        config,
        &[Method::Erm, Method::ErmrsY, Method::ErmrsYz, Method::GroupDro, Method::Correlation],
    )?;
    match config.method {
        Method::GroupDro => {
            let ids = sample_batch(&data.index, config.sampler(), config.batch_size, &mut state.uniform_rng)?;
            let attrs = data
                .dataset
                .attributes()
                .ok_or_else(|| Error::Unsupported("group_dro needs observed attributes".into()))?;
            let labels = data.dataset.labels();
            let k_z = data.index.k_z();
            let DualState::GroupWeights(q) = &mut state.dual else {
                return Err(Error::Contract("group_dro needs group weights".into()));
            };
            let (_, loss, grad) = weighted_pass(&state.params, data.dataset, &ids, |losses| {
                let mut sums = vec![0.0; q.len()];
                let mut counts = vec![0usize; q.len()];
                for (pos, &i) in ids.iter().enumerate() {
                    let g = labels[i] * k_z + attrs[i];
                    sums[g] += losses[pos];
                    counts[g] += 1;
                }
                let means: Vec<Option<f64>> = sums
                    .iter()
                    .zip(&counts)
                    .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
                    .collect();
                group_dro_weights(q, &means, config.dro_step);
                Ok(ids
                    .iter()
                    .map(|&i| {
                        let g = labels[i] * k_z + attrs[i];
                        q[g] / counts[g] as f64
                    })
                    .collect())
            })?;
            apply_update(state, config, grad, StepRecord { loss, penalty: loss })
        }
        Method::Correlation => {
            let (ids, loss, mut grad) = erm_part(state, config, data)?;
            let mut penalty = 0.0;
            if config.lambda > 0.0 {
                let labels = data.dataset.batch_labels(&ids);
                let (_, _, pen_grad) = weighted_pass(&state.params, data.dataset, &ids, |losses| {
                    let (value, deriv) = within_class_terms(losses, &labels);
                    penalty = value;
                    Ok(deriv.into_iter().map(|d| config.lambda * d).collect())
                })?;
                grad.axpy(1.0, &pen_grad);
            }
            apply_update(state, config, grad, StepRecord { loss, penalty })
        }
        _ => {
            let (_, loss, grad) = erm_part(state, config, data)?;
            apply_update(state, config, grad, StepRecord { loss, penalty: 0.0 })
        }
    }
}

/// Exponential-weights update `q_g ← q_g exp(η L_g)`, renormalised; groups
/// without a loss keep their weight before normalisation.
pub fn group_dro_weights(q: &mut [f64], group_losses: &[Option<f64>], step: f64) {
    let shift = group_losses.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    for (qg, loss) in q.iter_mut().zip(group_losses) {
        if let Some(l) = loss {
            *qg *= (step * (l - shift)).exp();
        }
    }
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
}

pub fn train_step(state: &mut TrainerState, config: &TrainConfig, data: &TrainData<'_>) -> Result<()> {
    match config.method {
        Method::Rcsv => rcsv_step(state, config, data),
        Method::RcsvU => rcsvu_step(state, config, data),
        _ => baseline_step(state, config, data),
    }
}

/// Runs `config.steps` updates from a fresh initialisation.
pub fn train(config: &TrainConfig, dataset: &GroupedDataset) -> Result<TrainerState> {
    let data = TrainData::new(dataset, config)?;
    let mut state = TrainerState::init(config, &data)?;
    run_until(&mut state, config, &data, config.steps)?;
    Ok(state)
}

/// Continues training until `state.step == steps`.
pub fn run_until(state: &mut TrainerState, config: &TrainConfig, data: &TrainData<'_>, steps: usize) -> Result<()> {
    while state.step < steps {
        train_step(state, config, data)?;
    }
    Ok(())
}

#[cfg(test)]
#[path = "steps_tests.rs"]
mod tests;
