pub mod datasets;
pub mod error;
pub mod grad;
pub mod harness;
pub mod metrics;
pub mod oracles;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
