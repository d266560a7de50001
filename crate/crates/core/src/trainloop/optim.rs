use crate::gradflow::Array;
use crate::scalar::Scalar;

use super::TrainError;

/// Mean absolute error over every element of a batch of horizon vectors.
pub fn mae_loss<T: Scalar>(pred: &[Vec<T>], actual: &[Vec<T>]) -> Result<T, TrainError> {
    if pred.len() != actual.len() || pred.iter().zip(actual).any(|(p, a)| p.len() != a.len()) {
        return Err(TrainError::ShapeMismatch("prediction and target batches differ".into()));
    }
    let n: usize = pred.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let total: T = pred
        .iter()
        .zip(actual)
        .flat_map(|(p, a)| p.iter().zip(a).map(|(&x, &y)| (x - y).abs()))
        .sum();
    Ok(total / T::of_usize(n))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with per-tensor step counters, so a tensor that sat frozen resumes
/// with its own bias correction and moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    m: Vec<Array<T>>,
    v: Vec<Array<T>>,
    steps: Vec<i32>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<'a>(cfg: AdamConfig, params: impl IntoIterator<Item = &'a Array<T>>) -> Self {
        let m: Vec<Array<T>> = params.into_iter().map(|p| Array::zeros(p.shape())).collect();
        Self {
            cfg,
            v: m.clone(),
            steps: vec![0; m.len()],
            m,
        }
    }

    /// Steps taken by tensor `i`.
    pub fn steps(&self, i: usize) -> i32 {
        self.steps[i]
    }

    pub fn moments(&self, i: usize) -> (&Array<T>, &Array<T>) {
        (&self.m[i], &self.v[i])
    }

    /// Updates every tensor with `Some` gradient. Tensors with `None` are
    /// frozen: neither the values nor the moments change.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Array<T>>,
        grads: &[Option<Array<T>>],
    ) -> Result<(), TrainError>
    where
        T: 'a,
    {
        let params: Vec<&mut Array<T>> = params.into_iter().collect();
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let (b1, b2) = (T::of(self.cfg.beta1), T::of(self.cfg.beta2));
        let (lr, eps) = (T::of(self.cfg.lr), T::of(self.cfg.eps));
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            if g.shape() != p.shape() || g.shape() != self.m[i].shape() {
                return Err(TrainError::ShapeMismatch(format!(
                    "gradient {:?} for parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            self.steps[i] += 1;
            let t = self.steps[i];
            let c1 = T::one() - b1.powi(t);
            let c2 = T::one() - b2.powi(t);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
