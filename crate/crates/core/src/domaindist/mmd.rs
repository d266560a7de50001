use std::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataseries::WindowedDataset;
use crate::scalar::Scalar;

use super::{DistError, Kernel};

/// Default per-domain subsample cap.
pub const DEFAULT_CAP: usize = 2000;

/// Flattened window inputs of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSample<T> {
    pub domain: String,
    pub vectors: Vec<Vec<T>>,
    /// Seed of the subsample, when one was drawn.
    pub seed: Option<u64>,
}

impl<T: Scalar> DomainSample<T> {
    pub fn new(domain: impl Into<String>, vectors: Vec<Vec<T>>) -> Result<Self, DistError> {
        if vectors.is_empty() {
            return Err(DistError::TooFewSamples(0));
        }
        let len = vectors[0].len();
        if let Some(v) = vectors.iter().find(|v| v.len() != len) {
            return Err(DistError::LengthMismatch {
                left: len,
                right: v.len(),
            });
        }
        Ok(Self {
            domain: domain.into(),
            vectors,
            seed: None,
        })
    }

    /// Window inputs of `ds`, subsampled without replacement to at most `cap`
    /// (kept in temporal order).
    pub fn from_windows(ds: &WindowedDataset<T>, cap: usize, seed: u64) -> Result<Self, DistError> {
        if ds.len() <= cap {
            return Self::new(ds.domain.clone(), ds.inputs.clone());
        }
        let mut idx = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), ds.len(), cap).into_vec();
        idx.sort_unstable();
        let mut s = Self::new(ds.domain.clone(), idx.into_iter().map(|i| ds.inputs[i].clone()).collect())?;
        s.seed = Some(seed);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}

fn canonical<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| x.as_f64().total_cmp(&y.as_f64()))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn within<T: Scalar, K: Kernel<T>>(xs: &[Vec<T>], k: &K) -> T {
    let n = xs.len();
    let mut diag = T::zero();
    let mut off = T::zero();
    for i in 0..n {
        diag += k.eval(&xs[i], &xs[i]);
        for j in i + 1..n {
            off += k.eval(&xs[i], &xs[j]);
        }
    }
    (diag + T::of(2.0) * off) / T::of_usize(n * n)
}

fn across<T: Scalar, K: Kernel<T>>(xs: &[Vec<T>], ys: &[Vec<T>], k: &K) -> T {
    let mut s = T::zero();
    for x in xs {
        for y in ys {
            s += k.eval(x, y);
        }
    }
    s / T::of_usize(xs.len() * ys.len())
}

/// Biased estimate `mean k(A,A) + mean k(B,B) − 2·mean k(A,B)` before
/// clamping. The two sets are put in a canonical order first, so swapping the
/// arguments gives a bit-identical result.
pub fn mmd2_unclamped<T: Scalar, K: Kernel<T>>(
    a: &DomainSample<T>,
    b: &DomainSample<T>,
    kernel: &K,
) -> Result<T, DistError> {
    if a.dim() != b.dim() {
        return Err(DistError::LengthMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (x, y) = match canonical(&a.vectors, &b.vectors) {
        Ordering::Greater => (&b.vectors, &a.vectors),
        _ => (&a.vectors, &b.vectors),
    };
    Ok(within(x, kernel) + within(y, kernel) - T::of(2.0) * across(x, y, kernel))
}

/// Squared MMD with round-off negatives clamped to 0.
pub fn mmd2<T: Scalar, K: Kernel<T>>(
    a: &DomainSample<T>,
    b: &DomainSample<T>,
    kernel: &K,
) -> Result<T, DistError> {
    Ok(mmd2_unclamped(a, b, kernel)?.max(T::zero()))
}
