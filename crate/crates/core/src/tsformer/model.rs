use crate::gradflow::{Array, NodeId, Tape};
use crate::scalar::Scalar;

use super::params::ENCODER_SLOTS;
use super::{ModelConfig, ModelError, ModelParameters};

/// Sinusoidal position table, `lookback × d_model`:
/// `(pos, 2i) = sin(pos / 10000^(2i/d))`, `(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding<T: Scalar>(lookback: usize, d_model: usize) -> Result<Array<T>, ModelError> {
    if !d_model.is_multiple_of(2) {
        return Err(ModelError::OddDimension(d_model));
    }
    let mut data = Vec::with_capacity(lookback * d_model);
    for pos in 0..lookback {
        for col in 0..d_model {
            let pair = (col / 2 * 2) as f64;
            let angle = pos as f64 / 10000f64.powf(pair / d_model as f64);
            data.push(T::of(if col % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Ok(Array::new(vec![lookback, d_model], data)?)
}

/// Tape handles for every parameter, grouped like [`ModelParameters`].
/// Frozen groups are registered as constants.
#[derive(Clone, Debug)]
pub struct ParamNodes {
    pub groups: Vec<Vec<NodeId>>,
    pub trainable: Vec<bool>,
}

impl ParamNodes {
    pub fn register<T: Scalar>(
        tape: &mut Tape<T>,
        params: &ModelParameters<T>,
        trainable: impl Fn(&str) -> bool,
    ) -> Result<Self, ModelError> {
        let mut groups = Vec::with_capacity(params.groups.len());
        let mut flags = Vec::with_capacity(params.groups.len());
        for g in &params.groups {
            let train = trainable(&g.name);
            let ids = g
                .params
                .iter()
                .map(|p| {
                    if train {
                        tape.param(p.value.clone())
                    } else {
                        tape.constant(p.value.clone())
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            groups.push(ids);
            flags.push(train);
        }
        Ok(Self {
            groups,
            trainable: flags,
        })
    }
}

/// Records the forward pass for a batch `[B, lookback, features]` and
/// returns the `[B, horizon]` prediction node.
///
/// embedding + positions → n × (self-attention, residual, layer norm,
/// ReLU feed-forward, residual, layer norm) → last position → linear decoder.
pub fn forward_tape<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    nodes: &ParamNodes,
    input: NodeId,
) -> Result<NodeId, ModelError> {
    let shape = tape.value(input).shape().to_vec();
    if shape.len() != 3 || shape[1] != cfg.lookback || shape[2] != cfg.features {
        return Err(ModelError::ShapeMismatch(format!(
            "input {:?} for lookback {} and {} features",
            shape, cfg.lookback, cfg.features
        )));
    }
    if nodes.groups.len() != cfg.n_layers + 2 {
        return Err(ModelError::ShapeMismatch("parameter groups do not match config".into()));
    }
    let batch = shape[0];
    let (d, dk, m) = (cfg.d_model, cfg.head_dim(), cfg.lookback);
    let eps = T::of(cfg.eps);
    let scale = T::one() / T::of_usize(dk).sqrt();

    let emb = &nodes.groups[0];
    let mut h = tape.matmul(input, emb[0])?;
    h = tape.add(h, emb[1])?;
    let pe = tape.constant(positional_encoding(m, d)?)?;
    h = tape.add(h, pe)?;

    for layer in &nodes.groups[1..=cfg.n_layers] {
        debug_assert_eq!(layer.len(), ENCODER_SLOTS.len());
        let [wq, wk, wv, wo, g1, b1, w1, c1, w2, c2, g2, b2] = layer[..] else {
            return Err(ModelError::ShapeMismatch("encoder group layout".into()));
        };
        let q = tape.matmul(h, wq)?;
        let k = tape.matmul(h, wk)?;
        let v = tape.matmul(h, wv)?;
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for head in 0..cfg.n_heads {
            let qh = tape.slice(q, 2, head * dk, dk)?;
            let kh = tape.slice(k, 2, head * dk, dk)?;
            let vh = tape.slice(v, 2, head * dk, dk)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let weights = tape.softmax_lastdim(scores)?;
            heads.push(tape.matmul(weights, vh)?);
        }
        let attn = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat(&heads, 2)?
        };
        let attn = tape.matmul(attn, wo)?;
        let r1 = tape.add(h, attn)?;
        let n1 = tape.layer_norm(r1, g1, b1, eps)?;
        let f = tape.matmul(n1, w1)?;
        let f = tape.add(f, c1)?;
        let f = tape.relu(f)?;
        let f = tape.matmul(f, w2)?;
        let f = tape.add(f, c2)?;
        let r2 = tape.add(n1, f)?;
        h = tape.layer_norm(r2, g2, b2, eps)?;
    }

    let last = tape.slice(h, 1, m - 1, 1)?;
    let last = tape.reshape(last, &[batch, d])?;
    let dec = &nodes.groups[cfg.n_layers + 1];
    let out = tape.matmul(last, dec[0])?;
    Ok(tape.add(out, dec[1])?)
}

/// Stacks windows (each `lookback × features`, row-major) into one array.
pub fn batch_array<T: Scalar>(cfg: &ModelConfig, windows: &[&[T]]) -> Result<Array<T>, ModelError> {
    let per = cfg.lookback * cfg.features;
    let mut data = Vec::with_capacity(windows.len() * per);
    for w in windows {
        if w.len() != per {
            return Err(ModelError::ShapeMismatch(format!(
                "window of {} values, expected {per}",
                w.len()
            )));
        }
        data.extend_from_slice(w);
    }
    Ok(Array::new(
        vec![windows.len(), cfg.lookback, cfg.features],
        data,
    )?)
}

/// Predictions for a batch of windows, one `horizon`-vector each.
pub fn predict_batch<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    windows: &[&[T]],
) -> Result<Vec<Vec<T>>, ModelError> {
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params, |_| false)?;
    let x = tape.constant(batch_array(cfg, windows)?)?;
    let y = forward_tape(&mut tape, cfg, &nodes, x)?;
    Ok(tape
        .value(y)
        .data()
        .chunks(cfg.horizon)
        .map(<[T]>::to_vec)
        .collect())
}

/// Prediction for a single `lookback × features` window.
pub fn forward<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    window: &[T],
) -> Result<Vec<T>, ModelError> {
    Ok(predict_batch(params, cfg, &[window])?.remove(0))
}
