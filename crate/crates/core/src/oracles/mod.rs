//! Numerical checks of the estimator and objective guarantees.

mod population;
mod report;
mod sharpness;
mod studies;

pub use population::{
    barycentric_lattice, check_invariance, check_shift_bound, conditional_grid, csv_errors,
    label_given_prediction, linear_logistic_loss, random_linear_losses, reference_spec, zero_one_loss, BoxedLoss,
};
pub use report::{read_reports, write_reports, OracleReport};
pub use sharpness::{check_quantile_sharpness, extremal_mixture, random_mixture, MixtureCase};
pub use studies::{check_gap_bound, convergence_study, estimator_rate_study, log_log_slope};
