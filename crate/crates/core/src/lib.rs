//! Transfer learning for time-series Transformers: pre-train on a source
//! domain, mix a share of source windows into a target domain and fine-tune
//! with gradual unfreezing, plus the baselines, MMD domain analysis and
//! forgetting / data-shift evaluation around it.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataseries;
pub mod domaindist;
pub mod evalkit;
pub mod gradflow;
pub mod scalar;
pub mod trainloop;
pub mod tsformer;

pub use scalar::Scalar;

use thiserror::Error;

/// Any error raised by this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] dataseries::DataError),
    #[error(transparent)]
    Grad(#[from] gradflow::GradError),
    #[error(transparent)]
    Model(#[from] tsformer::ModelError),
    #[error(transparent)]
    Train(#[from] trainloop::TrainError),
    #[error(transparent)]
    Dist(#[from] domaindist::DistError),
    #[error(transparent)]
    Eval(#[from] evalkit::EvalError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Default precision.
pub type Real = f64;
pub type Series = dataseries::TimeSeries<Real>;
pub type Windows = dataseries::WindowedDataset<Real>;
pub type Normalizer = dataseries::Normalizer<Real>;
pub type Params = tsformer::ModelParameters<Real>;
pub type Checkpoint = tsformer::Checkpoint<Real>;
pub type Fisher = trainloop::FisherDiag<Real>;
pub type Sample = domaindist::DomainSample<Real>;

/// Single-precision variants.
pub type Series32 = dataseries::TimeSeries<f32>;
pub type Windows32 = dataseries::WindowedDataset<f32>;
pub type Checkpoint32 = tsformer::Checkpoint<f32>;
