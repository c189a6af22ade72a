//! Grouped datasets: the Gaussian toy family, coloured digits, IDX
//! ingestion, group indexing and stratified batch samplers.

mod colored;
mod container;
mod dataset;
mod idx;
mod index;
mod sampler;
mod toy;

pub use colored::{colorize, colorize_mixture, mixture_counts, ColorAssignment, ColorScheme, NUM_DIGITS, PALETTE};
pub use container::{decode_dataset, encode_dataset, read_dataset, write_dataset};
pub use dataset::{empirical_correlation, GroupedDataset, GroupedSample};
pub use idx::{encode_idx, parse_idx, read_idx_file, IdxData};
pub use index::{build_group_index, GroupIndex};
pub use sampler::{sample_batch, SamplerStrategy};
pub use toy::{gen_toy, ToySpec, DEFAULT_BLOCK_DIM, DEFAULT_MU1_NORM, DEFAULT_MU2_NORM};
