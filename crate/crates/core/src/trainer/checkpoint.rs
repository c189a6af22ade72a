//! Checkpoint container.
//!
//! ```text
//! magic        8 bytes  "CSVCKPT1"
//! version      u32 LE   1
//! config hash  32 bytes SHA-256 of the JSON-encoded TrainConfig
//! step         u64 LE
//! payload len  u64 LE
//! payload      JSON: parameters, dual state, momentum buffer, trace and
//!              the word positions of both batch streams
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grad::ModelParams;
use crate::rng::{stream_rng, STREAM_PENALTY_BATCH, STREAM_UNIFORM_BATCH};
use crate::trainer::{DualState, StepRecord, TrainConfig, TrainerState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CSVCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 32 + 8 + 8;

#[derive(Serialize, Deserialize)]
struct Payload {
    params: ModelParams,
    dual: DualState,
    velocity: Option<ModelParams>,
    trace: Vec<StepRecord>,
    /// u128 word positions as decimal strings.
    uniform_word_pos: String,
    penalty_word_pos: String,
}

pub fn config_hash(config: &TrainConfig) -> Result<[u8; 32]> {
    let json = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&json).into())
}

pub fn encode_checkpoint(state: &TrainerState, config: &TrainConfig) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(&Payload {
        params: state.params.clone(),
        dual: state.dual.clone(),
        velocity: state.velocity.clone(),
        trace: state.trace.clone(),
        uniform_word_pos: state.uniform_rng.get_word_pos().to_string(),
        penalty_word_pos: state.penalty_rng.get_word_pos().to_string(),
    })?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&config_hash(config)?);
    out.extend_from_slice(&(state.step as u64).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Restores a state saved under the same `config`; a different config is
/// rejected through the stored hash.
pub fn decode_checkpoint(bytes: &[u8], config: &TrainConfig) -> Result<TrainerState> {
    let format = |offset: usize, message: &str| Error::Format {
        offset,
        message: message.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(format(bytes.len(), "checkpoint header truncated"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(format(0, "not a checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(format(8, &format!("unsupported checkpoint version {version}")));
    }
    if bytes[12..44] != config_hash(config)? {
        return Err(format(12, "checkpoint was written for a different configuration"));
    }
    let step = u64::from_le_bytes(bytes[44..52].try_into().expect("8 bytes")) as usize;
    let len = u64::from_le_bytes(bytes[52..60].try_into().expect("8 bytes")) as usize;
    if bytes.len() - HEADER_LEN != len {
        return Err(format(HEADER_LEN, "payload length does not match header"));
    }
    let payload: Payload = serde_json::from_slice(&bytes[HEADER_LEN..])?;
    let word_pos = |s: &str| {
        s.parse::<u128>()
            .map_err(|_| format(HEADER_LEN, "invalid rng word position"))
    };
    let mut uniform_rng = stream_rng(config.seed, STREAM_UNIFORM_BATCH);
    uniform_rng.set_word_pos(word_pos(&payload.uniform_word_pos)?);
    let mut penalty_rng = stream_rng(config.seed, STREAM_PENALTY_BATCH);
    penalty_rng.set_word_pos(word_pos(&payload.penalty_word_pos)?);
    if payload.trace.len() != step {
        return Err(format(44, "trace length disagrees with step counter"));
    }
    Ok(TrainerState {
        params: payload.params,
        dual: payload.dual,
        velocity: payload.velocity,
        step,
        trace: payload.trace,
        uniform_rng,
        penalty_rng,
    })
}

pub fn save_checkpoint(path: &Path, state: &TrainerState, config: &TrainConfig) -> Result<()> {
    std::fs::write(path, encode_checkpoint(state, config)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, config: &TrainConfig) -> Result<TrainerState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, config)
}
