use crate::scalar::Scalar;

use super::EvalError;

/// Scores of one model on one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub domain: String,
    pub model: String,
    /// Original units of the target feature.
    pub rmse: f64,
    pub mae: f64,
    /// Units of the model's normalizer; absent for models without one.
    pub rmse_norm: Option<f64>,
    pub mae_norm: Option<f64>,
    pub n_windows: usize,
}

fn errors<'a, T: Scalar>(
    actual: &'a [Vec<T>],
    pred: &'a [Vec<T>],
) -> Result<impl Iterator<Item = T> + 'a, EvalError> {
    if actual.len() != pred.len() || actual.iter().zip(pred).any(|(a, p)| a.len() != p.len()) {
        return Err(EvalError::ShapeMismatch("actual and predicted batches differ".into()));
    }
    if actual.iter().all(Vec::is_empty) {
        return Err(EvalError::EmptyInput);
    }
    Ok(actual
        .iter()
        .zip(pred)
        .flat_map(|(a, p)| a.iter().zip(p).map(|(&x, &y)| y - x)))
}

fn count<T>(actual: &[Vec<T>]) -> usize {
    actual.iter().map(Vec::len).sum()
}

/// Root mean squared error over every element.
pub fn rmse<T: Scalar>(actual: &[Vec<T>], pred: &[Vec<T>]) -> Result<T, EvalError> {
    let s: T = errors(actual, pred)?.map(|e| e * e).sum();
    Ok((s / T::of_usize(count(actual))).sqrt())
}

/// Mean absolute error over every element.
pub fn mae<T: Scalar>(actual: &[Vec<T>], pred: &[Vec<T>]) -> Result<T, EvalError> {
    let s: T = errors(actual, pred)?.map(|e| e.abs()).sum();
    Ok(s / T::of_usize(count(actual)))
}
