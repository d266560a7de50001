//! Encoder-only Transformer forecaster: input embedding plus sinusoidal
//! positions, a stack of self-attention encoder blocks, and a linear decoder
//! reading the final position.

mod checkpoint;
mod config;
mod model;
mod params;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta, FORMAT_VERSION, MAGIC,
};
pub use config::ModelConfig;
pub use model::{batch_array, forward, forward_tape, positional_encoding, predict_batch, ParamNodes};
pub use params::{
    encoder_group, parameter_groups, ModelParameters, NamedParam, ParamGroup, DECODER, EMBEDDING,
};

use thiserror::Error;

use crate::gradflow::GradError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("d_model {0} must be even")]
    OddDimension(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint version {found} is not the supported {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Grad(#[from] GradError),
}

#[cfg(test)]
mod tests;
