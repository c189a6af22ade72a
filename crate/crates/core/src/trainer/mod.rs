//! Entropy-smoothed minimax training (RCSV, RCSV_U) and the baselines it is
//! compared against.

mod checkpoint;
mod config;
mod dual;
mod objective;
mod smoothing;
mod steps;

pub use checkpoint::{
    config_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use config::{LabelShift, Method, Schedule, TrainConfig};
pub use dual::{dual_update, DualState, DualVector};
pub use objective::{phi_rho_full, PhiEvaluation};
pub use smoothing::{
    gap_bound, label_shift_weights, smooth_range_penalty, smoothed_max_value, smoothed_max_weights,
    smoothed_objective,
};
pub use steps::{
    baseline_step, group_dro_weights, rcsv_step, rcsvu_step, run_until, train, train_step, within_class_variance, StepRecord,
    TrainData, TrainerState,
};
