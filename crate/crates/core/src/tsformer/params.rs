use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gradflow::Array;
use crate::scalar::Scalar;

use super::{ModelConfig, ModelError};

pub const EMBEDDING: &str = "embedding";
pub const DECODER: &str = "decoder";

/// Name of the `layer`-th encoder group (1-based).
pub fn encoder_group(layer: usize) -> String {
    format!("encoder.{layer}")
}

// Parameter slots of one encoder block, in storage order.
pub(crate) const ENCODER_SLOTS: [&str; 12] = [
    "attn.wq",
    "attn.wk",
    "attn.wv",
    "attn.wo",
    "ln1.gamma",
    "ln1.beta",
    "ffn.w1",
    "ffn.b1",
    "ffn.w2",
    "ffn.b2",
    "ln2.gamma",
    "ln2.beta",
];

#[derive(Clone, Debug, PartialEq)]
pub struct NamedParam<T> {
    pub name: String,
    pub value: Array<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup<T> {
    pub name: String,
    pub params: Vec<NamedParam<T>>,
}

/// Model weights as named groups in input-to-output order:
/// `embedding`, `encoder.1` … `encoder.n`, `decoder`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters<T> {
    pub groups: Vec<ParamGroup<T>>,
}

enum Fill {
    Uniform(usize),
    Ones,
    Zeros,
}

type Layout = Vec<(String, Vec<(String, Vec<usize>, Fill)>)>;

fn layout(cfg: &ModelConfig) -> Layout {
    let (f, d, ff, h) = (cfg.features, cfg.d_model, cfg.d_ff, cfg.horizon);
    let mut groups = vec![(
        EMBEDDING.to_string(),
        vec![
            ("embedding.weight".into(), vec![f, d], Fill::Uniform(f)),
            ("embedding.bias".into(), vec![d], Fill::Uniform(f)),
        ],
    )];
    for layer in 1..=cfg.n_layers {
        let g = encoder_group(layer);
        let shapes: [(Vec<usize>, Fill); 12] = [
            (vec![d, d], Fill::Uniform(d)),
            (vec![d, d], Fill::Uniform(d)),
            (vec![d, d], Fill::Uniform(d)),
            (vec![d, d], Fill::Uniform(d)),
            (vec![d], Fill::Ones),
            (vec![d], Fill::Zeros),
            (vec![d, ff], Fill::Uniform(d)),
            (vec![ff], Fill::Uniform(d)),
            (vec![ff, d], Fill::Uniform(ff)),
            (vec![d], Fill::Uniform(ff)),
            (vec![d], Fill::Ones),
            (vec![d], Fill::Zeros),
        ];
        let params = ENCODER_SLOTS
            .iter()
            .zip(shapes)
            .map(|(slot, (shape, fill))| (format!("{g}.{slot}"), shape, fill))
            .collect();
        groups.push((g, params));
    }
    groups.push((
        DECODER.to_string(),
        vec![
            ("decoder.weight".into(), vec![d, h], Fill::Uniform(d)),
            ("decoder.bias".into(), vec![h], Fill::Uniform(d)),
        ],
    ));
    groups
}

impl<T: Scalar> ModelParameters<T> {
    /// Seeded initialization: weights and biases uniform in
    /// `(−1/√fan_in, 1/√fan_in)`, layer-norm gains 1 and shifts 0.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups = layout(cfg)
            .into_iter()
            .map(|(name, params)| ParamGroup {
                name,
                params: params
                    .into_iter()
                    .map(|(pname, shape, fill)| {
                        let value = match fill {
                            Fill::Ones => Array::filled(&shape, T::one()),
                            Fill::Zeros => Array::zeros(&shape),
                            Fill::Uniform(fan_in) => {
                                let bound = 1.0 / (fan_in as f64).sqrt();
                                let n: usize = shape.iter().product();
                                let data = (0..n)
                                    .map(|_| T::of(rng.random_range(-bound..bound)))
                                    .collect();
                                Array::new(shape, data).expect("layout shape")
                            }
                        };
                        NamedParam { name: pname, value }
                    })
                    .collect(),
            })
            .collect();
        Ok(Self { groups })
    }

    /// Every parameter set to zero.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self, ModelError> {
        let mut p = Self::init(cfg, 0)?;
        for v in p.values_mut() {
            v.data_mut().iter_mut().for_each(|x| *x = T::zero());
        }
        Ok(p)
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup<T>> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Array<T>> {
        self.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array<T>> {
        self.groups
            .iter_mut()
            .flat_map(|g| g.params.iter_mut())
            .find(|p| p.name == name)
            .map(|p| &mut p.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedParam<T>> {
        self.groups.iter().flat_map(|g| g.params.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Array<T>> {
        self.groups
            .iter_mut()
            .flat_map(|g| g.params.iter_mut())
            .map(|p| &mut p.value)
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.iter().map(|p| p.value.len()).sum()
    }

    /// Largest absolute difference between any two corresponding entries.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.iter()
            .zip(other.iter())
            .fold(T::zero(), |m, (a, b)| m.max(a.value.max_abs_diff(&b.value)))
    }

    /// Checks names and shapes against the layout `cfg` implies.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        let expected = layout(cfg);
        let ok = expected.len() == self.groups.len()
            && expected.iter().zip(&self.groups).all(|((gname, ps), g)| {
                *gname == g.name
                    && ps.len() == g.params.len()
                    && ps
                        .iter()
                        .zip(&g.params)
                        .all(|((n, s, _), p)| *n == p.name && s.as_slice() == p.value.shape())
            });
        if ok {
            Ok(())
        } else {
            Err(ModelError::ShapeMismatch(
                "parameters do not match the model configuration".into(),
            ))
        }
    }
}

/// Group names in unfreezing order, output side first:
/// `decoder`, `encoder.n` … `encoder.1`, `embedding`.
pub fn parameter_groups<T: Scalar>(params: &ModelParameters<T>) -> Vec<String> {
    params.groups.iter().rev().map(|g| g.name.clone()).collect()
}
