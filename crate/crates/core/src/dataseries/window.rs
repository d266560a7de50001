use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::{DataError, TimeSeries};

/// Where a window came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    TargetNative,
    SourceMixed,
}

/// Supervised (lookback, horizon) pairs drawn from one series.
///
/// Each input is `lookback × features` row-major; each target holds the next
/// `horizon` values of the target feature. `stamps[j]` is the timestamp of
/// the first target sample of window `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset<T> {
    pub domain: String,
    pub lookback: usize,
    pub horizon: usize,
    pub features: usize,
    pub target_index: usize,
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<Vec<T>>,
    pub provenance: Vec<Provenance>,
    pub stamps: Vec<i64>,
}

impl<T: Scalar> WindowedDataset<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Last observed value of the target feature in window `j`.
    pub fn last_observed(&self, j: usize) -> T {
        self.inputs[j][(self.lookback - 1) * self.features + self.target_index]
    }

    /// Dataset restricted to the given window indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            domain: self.domain.clone(),
            lookback: self.lookback,
            horizon: self.horizon,
            features: self.features,
            target_index: self.target_index,
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
            stamps: idx.iter().map(|&i| self.stamps[i]).collect(),
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.lookback == other.lookback
            && self.horizon == other.horizon
            && self.features == other.features
            && self.target_index == other.target_index
    }

    pub fn count_of(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }
}

pub fn make_windows<T: Scalar>(
    series: &TimeSeries<T>,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowedDataset<T>, DataError> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(DataError::InvalidArgument(
            "lookback, horizon and stride must be positive".into(),
        ));
    }
    let n = series.len();
    if n < lookback + horizon {
        return Err(DataError::SeriesTooShort {
            len: n,
            needed: lookback + horizon,
        });
    }
    let f = series.n_features();
    let t = series.target_index();
    let count = (n - lookback - horizon) / stride + 1;
    let mut ds = WindowedDataset {
        domain: series.name().to_string(),
        lookback,
        horizon,
        features: f,
        target_index: t,
        inputs: Vec::with_capacity(count),
        targets: Vec::with_capacity(count),
        provenance: vec![Provenance::TargetNative; count],
        stamps: Vec::with_capacity(count),
    };
    let values = series.values();
    for j in 0..count {
        let start = j * stride;
        ds.inputs
            .push(values[start * f..(start + lookback) * f].to_vec());
        ds.targets.push(
            (start + lookback..start + lookback + horizon)
                .map(|r| values[r * f + t])
                .collect(),
        );
        ds.stamps.push(series.timestamps()[start + lookback]);
    }
    Ok(ds)
}

/// First `ceil(train_ratio · N)` windows train, the rest test.
pub fn split_chronological<T: Scalar>(
    ds: &WindowedDataset<T>,
    train_ratio: f64,
) -> Result<(WindowedDataset<T>, WindowedDataset<T>), DataError> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "train ratio {train_ratio} outside (0, 1)"
        )));
    }
    let n = ds.len();
    // The slack absorbs representation error in products like 0.7 · 10.
    let n_train = ((train_ratio * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let n_train = n_train.min(n);
    if n_train == 0 || n_train == n {
        return Err(DataError::EmptySplit {
            train: n_train,
            test: n - n_train,
        });
    }
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n).collect();
    Ok((ds.select(&train), ds.select(&test)))
}

/// Number of source windows that `pct` of `source_len` selects.
///
/// Rounds down, so 5% of 54,635 windows is 2,731.
pub fn mix_count(pct: f64, source_len: usize) -> usize {
    (pct * source_len as f64 + 1e-9).floor() as usize
}

/// Appends `mix_count(pct, |source|)` source windows, drawn uniformly without
/// replacement, then shuffles the union. Both steps are driven by `seed`.
/// With nothing to add the target set is returned unchanged.
pub fn mix_source<T: Scalar>(
    target_train: &WindowedDataset<T>,
    source_train: &WindowedDataset<T>,
    pct: f64,
    seed: u64,
) -> Result<WindowedDataset<T>, DataError> {
    if !target_train.same_layout(source_train) {
        return Err(DataError::IncompatibleShape(format!(
            "target (m={}, h={}, F={}) vs source (m={}, h={}, F={})",
            target_train.lookback,
            target_train.horizon,
            target_train.features,
            source_train.lookback,
            source_train.horizon,
            source_train.features
        )));
    }
    if !(pct >= 0.0) {
        return Err(DataError::InvalidArgument(format!("mixing pct {pct} is negative")));
    }
    let count = mix_count(pct, source_train.len());
    if pct > 1.0 || count > source_train.len() {
        return Err(DataError::PctTooLarge {
            requested: count,
            available: source_train.len(),
        });
    }
    if count == 0 {
        return Ok(target_train.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, source_train.len(), count).into_vec();
    let mut mixed = target_train.clone();
    for i in picked {
        mixed.inputs.push(source_train.inputs[i].clone());
        mixed.targets.push(source_train.targets[i].clone());
        mixed.provenance.push(Provenance::SourceMixed);
        mixed.stamps.push(source_train.stamps[i]);
    }
    let mut order: Vec<usize> = (0..mixed.len()).collect();
    order.shuffle(&mut rng);
    Ok(mixed.select(&order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize, f: usize) -> TimeSeries<f64> {
        let ts = (0..n as i64).map(|i| i * 900).collect();
        let vals = (0..n * f).map(|v| v as f64).collect();
        let names = (0..f).map(|j| format!("f{j}")).collect();
        TimeSeries::new("ramp", ts, 900, vals, names, f - 1).unwrap()
    }

    fn labelled(domain: &str, n: usize, offset: f64) -> WindowedDataset<f64> {
        let s = TimeSeries::new(
            domain,
            (0..n as i64 + 3).collect(),
            1,
            (0..n + 3).map(|v| v as f64 + offset).collect(),
            vec!["v".into()],
            0,
        )
        .unwrap();
        make_windows(&s, 2, 2, 1).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&ramp(10, 1), 4, 2, 1).unwrap().len(), 5);
        assert_eq!(make_windows(&ramp(100, 1), 96, 4, 1).unwrap().len(), 1);
        assert_eq!(make_windows(&ramp(10, 1), 4, 2, 3).unwrap().len(), 2);
    }

    #[test]
    fn boundary_window_rows() {
        let ds = make_windows(&ramp(6, 1), 4, 2, 1).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.inputs[0], vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(ds.targets[0], vec![4.0, 5.0]);
        assert_eq!(ds.stamps[0], 4 * 900);
    }

    #[test]
    fn too_short_series() {
        assert!(matches!(
            make_windows(&ramp(5, 1), 4, 2, 1),
            Err(DataError::SeriesTooShort { len: 5, needed: 6 })
        ));
    }

    #[test]
    fn split_counts() {
        let ds = labelled("d", 10, 0.0);
        let (tr, te) = split_chronological(&ds, 0.7).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        let small = labelled("d", 3, 0.0);
        assert!(matches!(
            split_chronological(&small, 0.7),
            Err(DataError::EmptySplit { train: 3, test: 0 })
        ));
    }

    #[test]
    fn split_count_for_large_source() {
        // 54,635 windows at 70/30 give 38,245 / 16,390.
        let n: usize = 54_635;
        let n_train = ((0.7 * n as f64) - 1e-9).ceil() as usize;
        assert_eq!((n_train, n - n_train), (38_245, 16_390));
    }

    #[test]
    fn mix_counts_and_tags() {
        let target = labelled("t", 50, 0.0);
        let source = labelled("s", 200, 1000.0);
        let mixed = mix_source(&target, &source, 0.10, 7).unwrap();
        assert_eq!(mixed.len(), 70);
        assert_eq!(mixed.count_of(Provenance::SourceMixed), 20);
        assert_eq!(mixed.domain, "t");
        assert_eq!(mix_source(&target, &source, 0.0, 7).unwrap(), target);
    }

    #[test]
    fn mix_count_matches_reported_sample_sizes() {
        assert_eq!(mix_count(0.05, 54_635), 2_731);
        assert_eq!(mix_count(0.20, 54_635), 10_927);
        assert_eq!(mix_count(0.05, 135_925), 6_796);
    }

    #[test]
    fn mix_errors() {
        let target = labelled("t", 5, 0.0);
        let source = labelled("s", 5, 0.0);
        assert!(matches!(
            mix_source(&target, &source, 1.5, 1),
            Err(DataError::PctTooLarge { .. })
        ));
        let mut other = source.clone();
        other.horizon = 3;
        assert!(matches!(
            mix_source(&target, &other, 0.1, 1),
            Err(DataError::IncompatibleShape(_))
        ));
    }

    proptest! {
        #[test]
        fn windows_tile_the_series(n in 3usize..60, m in 1usize..8, h in 1usize..4, stride in 1usize..4) {
            prop_assume!(n >= m + h);
            let s = ramp(n, 2);
            let ds = make_windows(&s, m, h, stride).unwrap();
            prop_assert_eq!(ds.len(), (n - m - h) / stride + 1);
            for j in 0..ds.len() {
                let start = j * stride;
                prop_assert_eq!(ds.last_observed(j), s.row(start + m - 1)[1]);
                prop_assert_eq!(ds.targets[j][0], s.row(start + m)[1]);
                prop_assert_eq!(ds.inputs[j].len(), m * 2);
                prop_assert_eq!(ds.targets[j].len(), h);
            }
        }

        #[test]
        fn split_preserves_time_order(n in 4usize..80, ratio in 0.05f64..0.95) {
            let ds = labelled("d", n, 0.0);
            if let Ok((tr, te)) = split_chronological(&ds, ratio) {
                prop_assert_eq!(tr.len() + te.len(), ds.len());
                prop_assert!(tr.stamps.iter().max() < te.stamps.iter().min());
            }
        }

        #[test]
        fn mixing_is_size_monotone_and_verbatim(nt in 1usize..40, ns in 1usize..80, pct in 0.0f64..1.0, seed in any::<u64>()) {
            let target = labelled("t", nt, 0.0);
            let source = labelled("s", ns, 500.0);
            let mixed = mix_source(&target, &source, pct, seed).unwrap();
            prop_assert_eq!(mixed.len(), target.len() + mix_count(pct, source.len()));
            for j in 0..mixed.len() {
                if mixed.provenance[j] == Provenance::SourceMixed {
                    prop_assert!(source.inputs.contains(&mixed.inputs[j]));
                    let i = source.inputs.iter().position(|x| *x == mixed.inputs[j]).unwrap();
                    prop_assert_eq!(&source.targets[i], &mixed.targets[j]);
                }
            }
            prop_assert_eq!(mixed, mix_source(&target, &source, pct, seed).unwrap());
        }
    }
}
