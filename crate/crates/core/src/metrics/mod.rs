//! Conditional spurious variation statistics: group mean losses, the
//! observed and attribute-free estimators, tail-mean quantile ranges and an
//! exact population oracle for finite distributions.

mod population;
mod quantile;
mod stats;

pub use population::{population_csv_oracle, DiscreteDistributionSpec, MAX_SUPPORT};
pub use quantile::{quantile_range, quantile_range_weighted, tail_means};
pub use stats::{
    csv_unobserved, empirical_csv, group_mean_losses, pairwise_differences, pairwise_f_observed, GroupLossStats,
};
