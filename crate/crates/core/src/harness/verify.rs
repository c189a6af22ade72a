use crate::error::Result;
use crate::harness::{toy_training_set, ExperimentConfig};
use crate::oracles::{
    check_gap_bound, check_invariance, check_shift_bound, check_quantile_sharpness, convergence_study,
    estimator_rate_study, linear_logistic_loss, random_linear_losses, reference_spec, OracleReport,
};
use crate::rng::derive_seed;
use crate::trainer::{Method, TrainConfig};

pub const CONVERGENCE_HORIZONS: [usize; 3] = [500, 2000, 8000];
pub const RATE_GRID: [usize; 4] = [100, 400, 1600, 6400];

/// Settings of the convergence study: horizon-scaled steps with `c = 1`
/// and a smoother inner maximum (`ρ = 0.1`) on the default toy task.
pub fn convergence_template() -> TrainConfig {
    TrainConfig {
        lr: 1.0,
        rho: 0.1,
        ..TrainConfig::toy_defaults(Method::Rcsv)
    }
}

/// Every oracle check at its default size. `quick` shrinks the convergence
/// horizons and rate trials for smoke runs.
pub fn run_oracle_suite(seed: u64, quick: bool) -> Result<Vec<OracleReport>> {
    let spec = reference_spec();
    let mut reports = vec![
        check_invariance(&spec, &|x: &[f64]| usize::from(x[0] > 0.0), 20)?,
        check_shift_bound(&spec, &random_linear_losses(seed), 500, 100, derive_seed(seed, 1), 10)?,
        check_quantile_sharpness(3, 0.25, 12, 100, derive_seed(seed, 2))?,
    ];
    let loss = linear_logistic_loss(vec![1.0, 0.5], 0.0, 5.0);
    let trials = if quick { 5 } else { 20 };
    reports.push(estimator_rate_study(&spec, &*loss, &RATE_GRID, trials, derive_seed(seed, 3))?.0);
    for m in [2, 4, 9, 16] {
        reports.push(check_gap_bound(m, 1.0, 0.01, 100, derive_seed(seed, 10 + m as u64))?);
    }
    let horizons: &[usize] = if quick { &[100, 400] } else { &CONVERGENCE_HORIZONS };
    let data = toy_training_set(&ExperimentConfig::toy(Method::Rcsv), seed)?;
    reports.push(convergence_study(&convergence_template(), &data, horizons, &[0, 1, 2])?.0);
    Ok(reports)
}

