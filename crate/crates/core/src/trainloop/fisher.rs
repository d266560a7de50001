use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataseries::WindowedDataset;
use crate::gradflow::{Array, NodeId, Tape};
use crate::scalar::Scalar;
use crate::tsformer::{batch_array, forward_tape, Checkpoint, ModelParameters, ParamNodes};

use super::TrainError;

/// Diagonal Fisher weights with the anchor weights they were measured at.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherDiag<T> {
    pub weights: ModelParameters<T>,
    pub anchor: ModelParameters<T>,
}

/// Empirical diagonal Fisher: the mean over `n_samples` windows of the
/// squared per-window MAE gradient. Windows are drawn without replacement
/// with `seed`; asking for more than exist uses them all.
pub fn fisher_estimate<T: Scalar>(
    base: &Checkpoint<T>,
    source: &WindowedDataset<T>,
    n_samples: usize,
    seed: u64,
) -> Result<FisherDiag<T>, TrainError> {
    let n = n_samples.min(source.len());
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let picked: Vec<usize> = if n == source.len() {
        (0..n).collect()
    } else {
        let mut idx = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), source.len(), n).into_vec();
        idx.sort_unstable();
        idx
    };
    let cfg = &base.config;
    let mut weights = base.params.clone();
    for w in weights.values_mut() {
        w.data_mut().iter_mut().for_each(|x| *x = T::zero());
    }
    for &i in &picked {
        let mut tape = Tape::new();
        let nodes = ParamNodes::register(&mut tape, &base.params, |_| true)?;
        let x = tape.constant(batch_array(cfg, &[source.inputs[i].as_slice()])?)?;
        let y = forward_tape(&mut tape, cfg, &nodes, x)?;
        let t = tape.constant(Array::new(vec![1, cfg.horizon], source.targets[i].clone())?)?;
        let d = tape.sub(y, t)?;
        let a = tape.abs(d)?;
        let loss = tape.mean(a)?;
        let grads = tape.backward(loss)?;
        let ids: Vec<NodeId> = nodes.groups.iter().flatten().copied().collect();
        for (w, id) in weights.values_mut().zip(ids) {
            let g = grads.get(id).expect("trainable parameter");
            for (acc, &gi) in w.data_mut().iter_mut().zip(g.data()) {
                *acc += gi * gi;
            }
        }
    }
    let count = T::of_usize(n);
    for w in weights.values_mut() {
        w.data_mut().iter_mut().for_each(|x| *x /= count);
    }
    Ok(FisherDiag {
        weights,
        anchor: base.params.clone(),
    })
}

/// `(λ/2)·Σ F_i (θ_i − θ*_i)²` evaluated directly.
pub fn ewc_penalty<T: Scalar>(params: &ModelParameters<T>, fisher: &FisherDiag<T>, lambda: T) -> T {
    let mut total = T::zero();
    for ((p, f), a) in params.iter().zip(fisher.weights.iter()).zip(fisher.anchor.iter()) {
        for ((&x, &w), &x0) in p.value.data().iter().zip(f.value.data()).zip(a.value.data()) {
            total += w * (x - x0) * (x - x0);
        }
    }
    lambda / T::of(2.0) * total
}
