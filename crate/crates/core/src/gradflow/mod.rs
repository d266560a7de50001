//! Minimal reverse-mode automatic differentiation over dense arrays.
//!
//! A [`Tape`] records every operation as it is evaluated. Calling
//! [`Tape::backward`] on a scalar node walks the tape once in reverse
//! creation order and returns vector-Jacobian products for every leaf
//! registered with [`Tape::param`]. Leaves registered with
//! [`Tape::constant`] never receive a gradient.
//!
//! Subgradient conventions: `relu'(0) = 0` and `abs'(0) = 0`.

mod array;
mod tape;

pub use array::Array;
pub use tape::{Gradients, NodeId, Tape};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

/// Largest relative error between reverse-mode gradients of `f` and central
/// finite differences, over every entry of every input.
///
/// The numeric derivative combines central differences at steps `eps` and
/// `eps / 2` with one Richardson step, `(4·D(eps/2) − D(eps)) / 3`, which
/// cancels the `eps²` truncation term. The relative error of one entry is
/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn grad_check_many<T, F>(f: F, inputs: &[Array<T>], eps: T) -> Result<T, GradError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[NodeId]) -> Result<NodeId, GradError>,
{
    let eval = |xs: &[Array<T>]| -> Result<T, GradError> {
        let mut tape = Tape::new();
        let ids = xs
            .iter()
            .map(|x| tape.constant(x.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let out = f(&mut tape, &ids)?;
        tape.value(out)
            .item()
            .ok_or_else(|| GradError::NonScalarLoss(tape.value(out).shape().to_vec()))
    };

    let mut tape = Tape::new();
    let ids = inputs
        .iter()
        .map(|x| tape.param(x.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let loss = f(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;

    let floor = T::of(1e-8);
    let two = T::of(2.0);
    let mut worst = T::zero();
    let mut probe: Vec<Array<T>> = inputs.to_vec();
    for (which, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).expect("param leaf has a gradient");
        for j in 0..inputs[which].len() {
            let orig = inputs[which].data()[j];
            let mut central = |h: T| -> Result<T, GradError> {
                probe[which].data_mut()[j] = orig + h;
                let up = eval(&probe)?;
                probe[which].data_mut()[j] = orig - h;
                let down = eval(&probe)?;
                probe[which].data_mut()[j] = orig;
                Ok((up - down) / (two * h))
            };
            let coarse = central(eps)?;
            let fine = central(eps / two)?;
            let numeric = (T::of(4.0) * fine - coarse) / T::of(3.0);
            let a = analytic.data()[j];
            let denom = a.abs().max(numeric.abs()).max(floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<T, F>(f: F, x: &Array<T>, eps: T) -> Result<T, GradError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, NodeId) -> Result<NodeId, GradError>,
{
    grad_check_many(|t, ids| f(t, ids[0]), std::slice::from_ref(x), eps)
}

#[cfg(test)]
mod tests;
