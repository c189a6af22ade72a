use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datasets::{build_group_index, GroupedDataset};
use crate::error::{Error, Result};
use crate::metrics::{pairwise_differences, DiscreteDistributionSpec};
use crate::oracles::{csv_errors, OracleReport};
use crate::trainer::{
    gap_bound, phi_rho_full, smoothed_max_value, train_step, Schedule, TrainConfig, TrainData, TrainerState,
};

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Mean absolute estimation error of the empirical CSV for each `n`,
/// with the fitted log-log slope. Passes when the slope lies in
/// `[−0.65, −0.35]`.
pub fn estimator_rate_study(
    spec: &DiscreteDistributionSpec,
    loss: &dyn Fn(&[f64], usize) -> f64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<(OracleReport, Vec<f64>)> {
    if n_grid.is_empty() || trials == 0 {
        return Err(Error::Validation("rate study needs a nonempty n grid and at least one trial".into()));
    }
    let errors = csv_errors(spec, loss, n_grid, trials, seed)?;
    let table = n_grid
        .iter()
        .zip(&errors)
        .map(|(n, e)| format!("n={n}: {e:.5}"))
        .collect::<Vec<_>>()
        .join(", ");
    let base = OracleReport::new("estimator_rate", 0.0, 0.15, trials, seed);
    if n_grid.len() < 2 {
        return Ok((base.failed(format!("insufficient grid, {table}")), errors));
    }
    if errors.iter().all(|&e| e < 1e-12) {
        return Ok((base.with_note(format!("zero error at every n, {table}")), errors));
    }
    let xs: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let report = match log_log_slope(&xs, &errors) {
        Some(slope) => OracleReport::new("estimator_rate", (slope + 0.5).abs(), 0.15, trials, seed)
            .with_statistic(slope)
            .with_note(table),
        None => base.failed(format!("slope undefined, {table}")),
    };
    Ok((report, errors))
}

/// Trains under the horizon-dependent step sizes for every `T` and seed,
/// tracking `min_t ‖∇Φ_ρ(θ_t)‖²` on the full training set. Passes when the
/// fitted slope of the seed-averaged minimum against `T` is at most −0.25.
pub fn convergence_study(
    template: &TrainConfig,
    dataset: &GroupedDataset,
    t_grid: &[usize],
    seeds: &[u64],
) -> Result<(OracleReport, Vec<f64>)> {
    if t_grid.is_empty() || seeds.is_empty() {
        return Err(Error::Validation("convergence study needs horizons and seeds".into()));
    }
    let index = build_group_index(dataset);
    let mut mins = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut total = 0.0;
        for &seed in seeds {
            let config = TrainConfig {
                steps: t,
                schedule: Schedule::Horizon,
                seed,
                ..template.clone()
            };
            config.validate()?;
            let data = TrainData::new(dataset, &config)?;
            let mut state = TrainerState::init(&config, &data)?;
            let mut best = phi_rho_full(dataset, &index, &state.params, config.lambda, config.rho)?.grad_norm_sq;
            while state.step < t {
                train_step(&mut state, &config, &data)?;
                let g = phi_rho_full(dataset, &index, &state.params, config.lambda, config.rho)?.grad_norm_sq;
                best = best.min(g);
            }
            total += best;
        }
        mins.push(total / seeds.len() as f64);
    }
    let table = t_grid
        .iter()
        .zip(&mins)
        .map(|(t, g)| format!("T={t}: {g:.3e}"))
        .collect::<Vec<_>>()
        .join(", ");
    let xs: Vec<f64> = t_grid.iter().map(|&t| t as f64).collect();
    let report = match log_log_slope(&xs, &mins) {
        Some(slope) => OracleReport::new("convergence_rate", slope + 0.25, 0.0, seeds.len(), template.seed)
            .with_statistic(slope)
            .with_note(table),
        None => OracleReport::new("convergence_rate", f64::NAN, 0.0, seeds.len(), template.seed)
            .failed(format!("slope undefined, {table}")),
    };
    Ok((report, mins))
}

/// Draws `trials` random loss vectors of length `m`, forms all ordered
/// pairwise differences and checks `|λ·smooth_max − λ·max| ≤ gap_bound(m)`.
/// The deviation is the largest excess over the bound.
pub fn check_gap_bound(m: usize, lambda: f64, rho: f64, trials: usize, seed: u64) -> Result<OracleReport> {
    if m < 2 {
        return Err(Error::Validation(format!("gap check needs m >= 2, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = gap_bound(m, lambda, rho);
    let mut worst = f64::NEG_INFINITY;
    let mut largest_ratio: f64 = 0.0;
    for _ in 0..trials {
        let scale = rng.random_range(0.001..5.0);
        let losses: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..scale)).collect();
        let f = pairwise_differences(&losses);
        let hard = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gap = (lambda * smoothed_max_value(&f, rho)? - lambda * hard).abs();
        worst = worst.max(gap - bound);
        if bound > 0.0 {
            largest_ratio = largest_ratio.max(gap / bound);
        }
    }
    Ok(OracleReport::new(format!("gap_bound_m{m}"), worst, 1e-9, trials, seed)
        .with_statistic(largest_ratio)
        .with_note(format!("bound {bound:.6}")))
}
