use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::DistError;

pub trait Kernel<T> {
    /// Must be exactly symmetric in its arguments.
    fn eval(&self, x: &[T], y: &[T]) -> T;
    fn describe(&self) -> String;
}

/// `exp(−‖x−y‖² / (2σ²))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rbf<T> {
    sigma: T,
}

impl<T: Scalar> Rbf<T> {
    pub fn new(sigma: T) -> Result<Self, DistError> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(DistError::BandwidthNonPositive(sigma.as_f64()));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }
}

fn sq_dist<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

impl<T: Scalar> Kernel<T> for Rbf<T> {
    fn eval(&self, x: &[T], y: &[T]) -> T {
        (-sq_dist(x, y) / (T::of(2.0) * self.sigma * self.sigma)).exp()
    }

    fn describe(&self) -> String {
        format!("rbf(sigma={:?})", self.sigma.as_f64())
    }
}

/// Plain dot product.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Linear;

impl<T: Scalar> Kernel<T> for Linear {
    fn eval(&self, x: &[T], y: &[T]) -> T {
        x.iter().zip(y).map(|(&a, &b)| a * b).sum()
    }

    fn describe(&self) -> String {
        "linear".into()
    }
}

pub fn rbf_kernel<T: Scalar>(x: &[T], y: &[T], sigma: T) -> Result<T, DistError> {
    if x.len() != y.len() {
        return Err(DistError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(Rbf::new(sigma)?.eval(x, y))
}

/// Pairs examined by [`median_heuristic`].
pub const MEDIAN_PAIRS: usize = 1000;

/// Median pairwise Euclidean distance. Every pair is used when there are at
/// most [`MEDIAN_PAIRS`] of them, otherwise that many distinct-index pairs
/// are drawn with `seed`. A zero median falls back to the mean distance, and
/// a zero mean to 1.
pub fn median_heuristic<T: Scalar>(samples: &[Vec<T>], seed: u64) -> Result<T, DistError> {
    let n = samples.len();
    if n < 2 {
        return Err(DistError::TooFewSamples(n));
    }
    let len = samples[0].len();
    if let Some(bad) = samples.iter().find(|v| v.len() != len) {
        return Err(DistError::LengthMismatch {
            left: len,
            right: bad.len(),
        });
    }
    let dist = |i: usize, j: usize| sq_dist(&samples[i], &samples[j]).sqrt();
    let total = n * (n - 1) / 2;
    let mut d: Vec<T> = if total <= MEDIAN_PAIRS {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| dist(i, j))
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..MEDIAN_PAIRS)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                dist(i, j)
            })
            .collect()
    };
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let k = d.len();
    let median = if k % 2 == 1 {
        d[k / 2]
    } else {
        (d[k / 2 - 1] + d[k / 2]) / T::of(2.0)
    };
    if median > T::zero() {
        return Ok(median);
    }
    let mean = d.iter().copied().sum::<T>() / T::of_usize(k);
    Ok(if mean > T::zero() { mean } else { T::one() })
}
