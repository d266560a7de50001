use crate::scalar::Scalar;

use super::{DataError, WindowedDataset};

/// Smallest standard deviation a normalizer will divide by.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> Normalizer<T> {
    pub fn new(mean: Vec<T>, std: Vec<T>) -> Result<Self, DataError> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(DataError::IncompatibleShape(format!(
                "{} means and {} stds",
                mean.len(),
                std.len()
            )));
        }
        let floor = T::of(STD_FLOOR);
        let std = std.into_iter().map(|s| s.max(floor)).collect();
        Ok(Self { mean, std })
    }

    /// Statistics that leave data unchanged.
    pub fn identity(features: usize) -> Self {
        Self {
            mean: vec![T::zero(); features],
            std: vec![T::one(); features],
        }
    }

    /// Population mean and standard deviation of every input row of `train`.
    pub fn fit(train: &WindowedDataset<T>) -> Result<Self, DataError> {
        let f = train.features;
        let rows = train.len() * train.lookback;
        if rows == 0 {
            return Err(DataError::EmptySeries);
        }
        let n = T::of_usize(rows);
        let mut mean = vec![T::zero(); f];
        for x in &train.inputs {
            for row in x.chunks(f) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); f];
        for x in &train.inputs {
            for row in x.chunks(f) {
                for j in 0..f {
                    let d = row[j] - mean[j];
                    var[j] += d * d;
                }
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Self::new(mean, std)
    }

    pub fn features(&self) -> usize {
        self.mean.len()
    }

    /// Z-scores every input feature and the targets (with the target
    /// feature's statistics).
    pub fn apply(&self, ds: &WindowedDataset<T>) -> Result<WindowedDataset<T>, DataError> {
        if ds.features != self.features() {
            return Err(DataError::IncompatibleShape(format!(
                "normalizer for {} features applied to {}",
                self.features(),
                ds.features
            )));
        }
        let mut out = ds.clone();
        let f = ds.features;
        for x in out.inputs.iter_mut() {
            for (i, v) in x.iter_mut().enumerate() {
                let j = i % f;
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        let (mt, st) = (self.mean[ds.target_index], self.std[ds.target_index]);
        for y in out.targets.iter_mut() {
            for v in y.iter_mut() {
                *v = (*v - mt) / st;
            }
        }
        Ok(out)
    }

    /// Maps a normalized target vector back to original units.
    pub fn invert_target(&self, target_index: usize, y: &[T]) -> Vec<T> {
        let (m, s) = (self.mean[target_index], self.std[target_index]);
        y.iter().map(|&v| v * s + m).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataseries::{make_windows, TimeSeries};
    use proptest::prelude::*;

    fn one_window(values: &[f64]) -> WindowedDataset<f64> {
        let n = values.len();
        let mut v = values.to_vec();
        v.push(0.0);
        let s = TimeSeries::new("d", (0..=n as i64).collect(), 1, v, vec!["x".into()], 0).unwrap();
        make_windows(&s, n, 1, 1).unwrap()
    }

    #[test]
    fn constant_feature_uses_floor() {
        let ds = one_window(&[5.0, 5.0, 5.0]);
        let norm = Normalizer::fit(&ds).unwrap();
        assert_eq!(norm.mean, vec![5.0]);
        assert_eq!(norm.std, vec![STD_FLOOR]);
        assert_eq!(norm.apply(&ds).unwrap().inputs[0], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_point_feature() {
        let ds = one_window(&[0.0, 2.0]);
        let norm = Normalizer::fit(&ds).unwrap();
        assert_eq!((norm.mean[0], norm.std[0]), (1.0, 1.0));
        assert_eq!(norm.apply(&ds).unwrap().inputs[0], vec![-1.0, 1.0]);
    }

    #[test]
    fn feature_count_mismatch() {
        let ds = one_window(&[0.0, 2.0]);
        let norm = Normalizer::<f64>::identity(2);
        assert!(norm.apply(&ds).is_err());
    }

    proptest! {
        #[test]
        fn target_round_trip(values in proptest::collection::vec(-1e3f64..1e3, 3..40)) {
            let ds = one_window(&values[..values.len() - 1]);
            let norm = Normalizer::fit(&ds).unwrap();
            let y = values.clone();
            let z: Vec<f64> = y.iter().map(|v| (v - norm.mean[0]) / norm.std[0]).collect();
            let back = norm.invert_target(0, &z);
            for (a, b) in y.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
