//! Experiment configuration, read from a TOML file.
//!
//! ```toml
//! seed = 7
//! source = "S"
//! targets = ["T1", "T2"]
//! strategies = ["one_step", "gu_only", "no_gu"]
//! # output_dir = "out"            # relative to this file
//!
//! [data]
//! lookback = 16
//! horizon = 4
//!
//! [[domains]]
//! id = "S"
//! synthetic = { length = 4000, ar = 0.6, period = 24.0, amplitude = 1.0, mean = 0.0, noise = 0.2 }
//!
//! [[domains]]
//! id = "T1"
//! csv = "data/t1.csv"
//! timestamp_column = "time"
//! feature_columns = ["load"]
//!
//! [model]
//! d_model = 16
//!
//! [pretrain]
//! epochs = 10
//!
//! [finetune]
//! epochs = 35
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tsft_core::dataseries::{AggPolicy, SyntheticDomainSpec};
use tsft_core::domaindist::MmdConfig;
use tsft_core::trainloop::{ScheduleKind, Strategy, TrainConfig};
use tsft_core::tsformer::ModelConfig;

use crate::CliError;

/// Version of the configuration dialect, recorded in every manifest.
pub const CONFIG_FORMAT: &str = "tsft-toml/1";

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "TSFT_OUTPUT_ROOT";

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEntry {
    pub length: usize,
    #[serde(default)]
    pub ar: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub noise: f64,
    pub seed: Option<u64>,
}

fn default_period() -> f64 {
    24.0
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainEntry {
    pub id: String,
    pub csv: Option<PathBuf>,
    pub synthetic: Option<SyntheticEntry>,
    pub timestamp_column: Option<String>,
    #[serde(default)]
    pub feature_columns: Vec<String>,
    pub target_column: Option<String>,
    pub delimiter: Option<char>,
    /// Resample to this spacing (seconds) after loading.
    pub resample_secs: Option<i64>,
    /// Per-feature aggregation for resampling: "mean" or "last".
    #[serde(default)]
    pub aggregation: Vec<String>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub lookback: usize,
    pub horizon: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
}

fn one() -> usize {
    1
}

fn default_ratio() -> f64 {
    0.7
}

#[derive(Clone, Debug, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_layers: Option<usize>,
    pub d_ff: Option<usize>,
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub patience: Option<usize>,
    pub min_delta: Option<f64>,
    /// Defaults to the global seed.
    pub seed: Option<u64>,
    /// "gradual", "top_layer_only" or "all_groups"; overrides the strategy's own.
    pub schedule: Option<String>,
    /// Fixed mixing fraction; chosen from the MMD report when unset.
    pub mix_pct: Option<f64>,
    pub ewc_lambda: Option<f64>,
    pub fisher_samples: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct MmdSection {
    pub cap: Option<usize>,
    pub sigma: Option<f64>,
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub source: String,
    pub targets: Vec<String>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    pub data: DataSection,
    pub domains: Vec<DomainEntry>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub pretrain: TrainSection,
    #[serde(default)]
    pub finetune: TrainSection,
    #[serde(default)]
    pub mmd: MmdSection,
}

fn default_strategies() -> Vec<String> {
    vec!["one_step".into(), "gu_only".into(), "no_gu".into()]
}

/// A parsed configuration together with where it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Exact file contents, hashed into manifests.
    pub text: String,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_str(&text, base_dir)
    }

    pub fn from_str(text: &str, base_dir: PathBuf) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        let loaded = Self {
            config,
            text: text.to_string(),
            base_dir,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// `--out` flag, then `output_dir`, then `$TSFT_OUTPUT_ROOT`, then `out`
    /// next to the config file.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.config.output_dir {
            return self.resolve(p);
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => self.base_dir.join("out"),
        }
    }

    pub fn domain(&self, id: &str) -> Result<&DomainEntry, CliError> {
        self.config
            .domains
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| invalid(format!("domain {id:?} is not defined")))
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        if c.targets.is_empty() {
            return Err(invalid("targets: at least one target domain is required"));
        }
        if c.targets.contains(&c.source) {
            return Err(invalid(format!("targets: source {:?} cannot also be a target", c.source)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &c.domains {
            if !seen.insert(d.id.as_str()) {
                return Err(invalid(format!("domains: id {:?} appears twice", d.id)));
            }
            self.validate_domain(d)?;
        }
        self.domain(&c.source)?;
        for t in &c.targets {
            self.domain(t)?;
        }
        for s in &c.strategies {
            s.parse::<Strategy>()
                .map_err(|_| invalid(format!("strategies: unknown strategy {s:?}")))?;
        }
        let widths: Vec<usize> = c.domains.iter().map(feature_count).collect();
        if widths.windows(2).any(|w| w[0] != w[1]) {
            return Err(invalid("domains: every domain needs the same number of features"));
        }
        if !(c.data.train_ratio > 0.0 && c.data.train_ratio < 1.0) {
            return Err(invalid("data.train_ratio must lie strictly between 0 and 1"));
        }
        if c.data.stride == 0 || c.data.lookback == 0 || c.data.horizon == 0 {
            return Err(invalid("data: lookback, horizon and stride must be positive"));
        }
        self.model_config()
            .validate()
            .map_err(|e| invalid(format!("model: {e}")))?;
        self.train_config(&c.pretrain)
            .map_err(|e| invalid(format!("pretrain: {e}")))?
            .validate()
            .map_err(|e| invalid(format!("pretrain: {e}")))?;
        self.train_config(&c.finetune)
            .map_err(|e| invalid(format!("finetune: {e}")))?
            .validate()
            .map_err(|e| invalid(format!("finetune: {e}")))?;
        if let Some(t) = c.mmd.threshold {
            if !(t > 0.0) {
                return Err(invalid("mmd.threshold must be positive"));
            }
        }
        Ok(())
    }

    fn validate_domain(&self, d: &DomainEntry) -> Result<(), CliError> {
        let at = |m: String| invalid(format!("domains.{}: {m}", d.id));
        match (&d.csv, &d.synthetic) {
            (Some(p), None) => {
                let path = self.resolve(p);
                if !path.is_file() {
                    return Err(at(format!("data file {} does not exist", path.display())));
                }
                if d.feature_columns.is_empty() {
                    return Err(at("feature_columns must name at least one column".into()));
                }
            }
            (None, Some(s)) => {
                self.synthetic_spec(d, s)
                    .validate()
                    .map_err(|e| at(e.to_string()))?;
            }
            _ => return Err(at("give exactly one of `csv` or `synthetic`".into())),
        }
        for a in &d.aggregation {
            parse_policy(a).map_err(at)?;
        }
        Ok(())
    }

    pub fn synthetic_spec(&self, d: &DomainEntry, s: &SyntheticEntry) -> SyntheticDomainSpec {
        let index = self
            .config
            .domains
            .iter()
            .position(|x| x.id == d.id)
            .unwrap_or(0) as u64;
        SyntheticDomainSpec {
            length: s.length,
            ar: s.ar,
            period: s.period,
            amplitude: s.amplitude,
            mean: s.mean,
            noise: s.noise,
            seed: s.seed.unwrap_or(self.config.seed.wrapping_add(index + 1)),
        }
    }

    pub fn features(&self) -> usize {
        self.config.domains.first().map(feature_count).unwrap_or(1)
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.config.model;
        let d = ModelConfig::default();
        ModelConfig {
            features: self.features(),
            lookback: self.config.data.lookback,
            horizon: self.config.data.horizon,
            d_model: m.d_model.unwrap_or(d.d_model),
            n_heads: m.n_heads.unwrap_or(d.n_heads),
            n_layers: m.n_layers.unwrap_or(d.n_layers),
            d_ff: m.d_ff.unwrap_or(d.d_ff),
            eps: m.eps.unwrap_or(d.eps),
        }
    }

    pub fn train_config(&self, s: &TrainSection) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        Ok(TrainConfig {
            batch_size: s.batch_size.unwrap_or(d.batch_size),
            epochs: s.epochs.unwrap_or(d.epochs),
            lr: s.lr.unwrap_or(d.lr),
            beta1: s.beta1.unwrap_or(d.beta1),
            beta2: s.beta2.unwrap_or(d.beta2),
            adam_eps: s.adam_eps.unwrap_or(d.adam_eps),
            patience: s.patience.unwrap_or(d.patience),
            min_delta: s.min_delta.unwrap_or(d.min_delta),
            seed: s.seed.unwrap_or(self.config.seed),
            schedule: s
                .schedule
                .as_deref()
                .map(str::parse::<ScheduleKind>)
                .transpose()
                .map_err(|e| invalid(e.to_string()))?,
            mix_pct: s.mix_pct.unwrap_or(d.mix_pct),
            ewc_lambda: s.ewc_lambda.unwrap_or(d.ewc_lambda),
            fisher_samples: s.fisher_samples.unwrap_or(d.fisher_samples),
        })
    }

    pub fn mmd_config(&self) -> MmdConfig {
        let d = MmdConfig::default();
        MmdConfig {
            cap: self.config.mmd.cap.unwrap_or(d.cap),
            seed: self.config.seed,
            sigma: self.config.mmd.sigma,
            threshold: self.config.mmd.threshold,
        }
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        self.config
            .strategies
            .iter()
            .map(|s| s.parse().expect("validated"))
            .collect()
    }
}

fn feature_count(d: &DomainEntry) -> usize {
    if d.synthetic.is_some() {
        1
    } else {
        d.feature_columns.len()
    }
}

pub fn parse_policy(s: &str) -> Result<AggPolicy, String> {
    match s {
        "mean" => Ok(AggPolicy::Mean),
        "last" => Ok(AggPolicy::Last),
        other => Err(format!("unknown aggregation {other:?} (use mean or last)")),
    }
}
