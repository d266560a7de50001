//! Maximum mean discrepancy between domains, used to rank target domains and
//! pick how much source data to mix in.

mod kernel;
mod mmd;
mod report;

pub use kernel::{median_heuristic, rbf_kernel, Kernel, Linear, Rbf, MEDIAN_PAIRS};
pub use mmd::{mmd2, mmd2_unclamped, DomainSample, DEFAULT_CAP};
pub use report::{
    mix_pct_rule, rank_targets, write_report_csv, MmdConfig, MmdReport, MmdRow, HIGH_MMD_PCT,
    LOW_MMD_PCT, REPORT_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("kernel bandwidth {0} must be positive")]
    BandwidthNonPositive(f64),
    #[error("vector lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("no target domains given")]
    NoTargets,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(String),
}
