//! Losses, Adam, freeze schedules, pre-training and the fine-tuning
//! strategies (one-step mixing with gradual unfreezing and its baselines).

mod config;
mod fisher;
mod optim;
mod schedule;
mod train;

pub use config::{ScheduleKind, Strategy, TrainConfig};
pub use fisher::{ewc_penalty, fisher_estimate, FisherDiag};
pub use optim::{mae_loss, Adam, AdamConfig};
pub use schedule::{gu_schedule, FreezeSchedule, Phase};
pub use train::{
    finetune, pretrain, write_training_log, EpochLog, FinetuneData, TrainOutcome, Trainer,
};

use thiserror::Error;

use crate::dataseries::DataError;
use crate::gradflow::GradError;
use crate::tsformer::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("strategy one_step needs source windows")]
    MissingSource,
    #[error("strategy ewc needs a Fisher estimate")]
    MissingFisher,
    #[error("gradual unfreezing needs at least 3 epochs, got {0}")]
    TooFewEpochs(usize),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Grad(#[from] GradError),
}
