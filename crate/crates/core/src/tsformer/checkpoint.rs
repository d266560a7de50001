//! Single-file checkpoint format.
//!
//! ```text
//! "TSFT" | version: u32 LE | manifest length: u64 LE | manifest (UTF-8)
//!        | payload: f64 LE × count | CRC-32 of payload: u32 LE
//! ```
//!
//! The manifest is `key=value` lines in a fixed order: config fields,
//! one `param=name:d0xd1` line per parameter in storage order (groups are
//! marked with `group=name`), normalizer statistics, training metadata and
//! the payload count. Reals in the manifest use Rust's shortest round-trip
//! formatting, so every stored value reloads bit-exactly.

use std::path::Path;

use crate::dataseries::Normalizer;
use crate::gradflow::Array;
use crate::scalar::Scalar;

use super::{ModelConfig, ModelError, ModelParameters, NamedParam, ParamGroup};

pub const MAGIC: &[u8; 4] = b"TSFT";
pub const FORMAT_VERSION: u32 = 1;

/// Provenance of a trained model.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    /// Domain the model was originally pre-trained on.
    pub source_domain: String,
    /// Domain of the most recent training run.
    pub domain: String,
    /// How the model was produced (`pretrain`, `one_step`, …).
    pub strategy: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub config: ModelConfig,
    pub params: ModelParameters<T>,
    pub normalizer: Normalizer<T>,
    pub meta: TrainingMeta,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptFile(msg.into())
}

fn join<T: Scalar>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| format!("{:?}", x.as_f64()))
        .collect::<Vec<_>>()
        .join(",")
}

fn check_text(field: &str, s: &str) -> Result<(), ModelError> {
    if s.contains('\n') || s.contains('\r') {
        return Err(ModelError::InvalidConfig(format!("{field} contains a line break")));
    }
    Ok(())
}

impl<T: Scalar> Checkpoint<T> {
    fn manifest(&self) -> Result<String, ModelError> {
        let c = &self.config;
        let m = &self.meta;
        for (field, s) in [
            ("source_domain", &m.source_domain),
            ("domain", &m.domain),
            ("strategy", &m.strategy),
        ] {
            check_text(field, s)?;
        }
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        line("config.features", c.features.to_string());
        line("config.lookback", c.lookback.to_string());
        line("config.horizon", c.horizon.to_string());
        line("config.d_model", c.d_model.to_string());
        line("config.n_heads", c.n_heads.to_string());
        line("config.n_layers", c.n_layers.to_string());
        line("config.d_ff", c.d_ff.to_string());
        line("config.eps", format!("{:?}", c.eps));
        let mut count = 0;
        for g in &self.params.groups {
            line("group", g.name.clone());
            for p in &g.params {
                let dims: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
                line("param", format!("{}:{}", p.name, dims.join("x")));
                count += p.value.len();
            }
        }
        line("normalizer.mean", join(&self.normalizer.mean));
        line("normalizer.std", join(&self.normalizer.std));
        line("meta.seed", m.seed.to_string());
        line("meta.epochs_run", m.epochs_run.to_string());
        line("meta.source_domain", m.source_domain.clone());
        line("meta.domain", m.domain.clone());
        line("meta.strategy", m.strategy.clone());
        line("payload.count", count.to_string());
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        self.params.check_layout(&self.config)?;
        let manifest = self.manifest()?;
        let mut payload = Vec::with_capacity(self.params.param_count() * 8);
        for p in self.params.iter() {
            for &v in p.value.data() {
                payload.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(16 + manifest.len() + payload.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing TSFT header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < mlen + 4 {
            return Err(corrupt("truncated file"));
        }
        let manifest = std::str::from_utf8(&body[..mlen]).map_err(|_| corrupt("manifest is not UTF-8"))?;
        let payload = &body[mlen..body.len() - 4];
        let stored = u32::from_le_bytes(body[body.len() - 4..].try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != stored {
            return Err(corrupt("payload checksum mismatch"));
        }
        if !payload.len().is_multiple_of(8) {
            return Err(corrupt("payload is not a whole number of f64 values"));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));

        let mut cfg = ModelConfig::default();
        let mut groups: Vec<ParamGroup<T>> = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut meta = TrainingMeta::default();
        let mut count = None;
        let num = |v: &str| v.parse::<usize>().map_err(|_| corrupt(format!("bad integer {v:?}")));
        let real = |v: &str| v.parse::<f64>().map_err(|_| corrupt(format!("bad real {v:?}")));
        let reals = |v: &str| -> Result<Vec<T>, ModelError> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| real(x).map(T::of)).collect()
        };
        for l in manifest.lines() {
            let (k, v) = l.split_once('=').ok_or_else(|| corrupt(format!("bad line {l:?}")))?;
            match k {
                "config.features" => cfg.features = num(v)?,
                "config.lookback" => cfg.lookback = num(v)?,
                "config.horizon" => cfg.horizon = num(v)?,
                "config.d_model" => cfg.d_model = num(v)?,
                "config.n_heads" => cfg.n_heads = num(v)?,
                "config.n_layers" => cfg.n_layers = num(v)?,
                "config.d_ff" => cfg.d_ff = num(v)?,
                "config.eps" => cfg.eps = real(v)?,
                "group" => groups.push(ParamGroup {
                    name: v.to_string(),
                    params: Vec::new(),
                }),
                "param" => {
                    let (name, dims) = v
                        .rsplit_once(':')
                        .ok_or_else(|| corrupt(format!("bad param {v:?}")))?;
                    let shape = if dims.is_empty() {
                        Vec::new()
                    } else {
                        dims.split('x').map(num).collect::<Result<Vec<_>, _>>()?
                    };
                    let n: usize = shape.iter().product();
                    let data: Vec<T> = values.by_ref().take(n).map(T::of).collect();
                    if data.len() != n {
                        return Err(corrupt("payload shorter than manifest"));
                    }
                    let group = groups.last_mut().ok_or_else(|| corrupt("param before group"))?;
                    group.params.push(NamedParam {
                        name: name.to_string(),
                        value: Array::new(shape, data)?,
                    });
                }
                "normalizer.mean" => mean = reals(v)?,
                "normalizer.std" => std = reals(v)?,
                "meta.seed" => {
                    meta.seed = v.parse().map_err(|_| corrupt(format!("bad seed {v:?}")))?
                }
                "meta.epochs_run" => meta.epochs_run = num(v)?,
                "meta.source_domain" => meta.source_domain = v.to_string(),
                "meta.domain" => meta.domain = v.to_string(),
                "meta.strategy" => meta.strategy = v.to_string(),
                "payload.count" => count = Some(num(v)?),
                _ => return Err(corrupt(format!("unknown manifest key {k:?}"))),
            }
        }
        if values.next().is_some() || count != Some(payload.len() / 8) {
            return Err(corrupt("payload length disagrees with manifest"));
        }
        cfg.validate().map_err(|e| corrupt(e.to_string()))?;
        let params = ModelParameters { groups };
        params
            .check_layout(&cfg)
            .map_err(|_| corrupt("parameter layout disagrees with config"))?;
        if mean.len() != cfg.features || std.len() != cfg.features {
            return Err(corrupt("normalizer width disagrees with config"));
        }
        Ok(Self {
            config: cfg,
            params,
            normalizer: Normalizer { mean, std },
            meta,
        })
    }
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: &Path) -> Result<(), ModelError> {
    let bytes = ckpt.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, ModelError> {
    let bytes =
        std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
}
