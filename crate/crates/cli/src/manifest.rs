use sha2::{Digest, Sha256};

use crate::config::{LoadedConfig, CONFIG_FORMAT};
use tsft_core::trainloop::FreezeSchedule;

/// Line-oriented run manifest: `key=value` entries followed by the verbatim
/// configuration after a `[config]` marker.
#[derive(Clone, Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &LoadedConfig) -> Self {
        let mut m = Self::default();
        m.set("manifest_format", "1");
        m.set("tool", concat!("tsft ", env!("CARGO_PKG_VERSION")));
        m.set("command", command);
        m.set("config_format", CONFIG_FORMAT);
        m.set("config_sha256", config_hash(&cfg.text));
        m.set("seed", cfg.config.seed.to_string());
        m
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self, cfg: &LoadedConfig) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s.push_str("[config]\n");
        s.push_str(&cfg.text);
        if !cfg.text.ends_with('\n') {
            s.push('\n');
        }
        s
    }
}

pub fn config_hash(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

/// `start:group;group|start:…`, e.g. `0:decoder|10:decoder;encoder.2|…`.
pub fn describe_schedule(s: &FreezeSchedule) -> String {
    s.phases
        .iter()
        .map(|p| format!("{}:{}", p.start, p.trainable.join(";")))
        .collect::<Vec<_>>()
        .join("|")
}
