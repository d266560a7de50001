//! Library side of the `tsft` command: configuration, data preparation and
//! the pretrain / finetune / mmd / experiment workflows.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod data;
pub mod manifest;

pub use commands::{experiment, finetune, mmd, pretrain, FinetuneArgs, PctChoice};
pub use config::LoadedConfig;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Failure while running; exit code 3.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}
