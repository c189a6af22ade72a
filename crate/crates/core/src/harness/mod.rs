//! Experiment configuration, orchestration and persisted reports.

mod config;
mod report;
mod runner;
mod verify;

pub use config::{parse_config, DatasetConfig, DatasetKind, EvalConfig, ExperimentConfig, RunConfig, TOY_SIGMA_TEST};
pub use report::{emit_report, read_report, reproduce_toy_table, results_csv, ToyTable, TABLE_METHODS};
pub use runner::{
    build_datasets, checkpoint_path, cosine_similarity_diag, evaluate, mnist_files_present, per_sample_losses, run_experiment,
    run_seed, seed_train_config, toy_training_set, training_csv, EvalSummary, Evaluation, GroupAccuracy, RunReport, SeedReport,
};
pub use verify::{convergence_template, run_oracle_suite, CONVERGENCE_HORIZONS, RATE_GRID};
