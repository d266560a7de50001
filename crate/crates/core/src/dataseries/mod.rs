//! Time-series ingestion, windowing, splitting, normalization, source
//! mixing and synthetic domain generation.

mod normalize;
mod series;
mod synth;
mod window;

pub use normalize::{Normalizer, STD_FLOOR};
pub use series::{
    load_csv, parse_timestamp, read_csv, resample, AggPolicy, CsvSchema, TimeSeries, MAX_FILL_RUN,
};
pub use synth::{synth_generate, SyntheticDomainSpec, SYNTH_EPOCH, SYNTH_SPACING};
pub use window::{
    make_windows, mix_count, mix_source, split_chronological, Provenance, WindowedDataset,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("irregular spacing: {0}")]
    IrregularSpacing(String),
    #[error("series is empty")]
    EmptySeries,
    #[error("output spacing {to}s is not an integer multiple of {from}s")]
    NonIntegerRatio { from: i64, to: i64 },
    #[error("series of {len} samples is shorter than the {needed} a window needs")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("split leaves an empty side ({train} train, {test} test)")]
    EmptySplit { train: usize, test: usize },
    #[error("incompatible shapes: {0}")]
    IncompatibleShape(String),
    #[error("requested {requested} source windows but only {available} exist")]
    PctTooLarge { requested: usize, available: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(String),
}
