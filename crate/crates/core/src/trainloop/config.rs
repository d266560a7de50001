use std::fmt;
use std::str::FromStr;

use super::TrainError;

/// How a fine-tuning run is carried out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Mix source windows into the target set, then gradual unfreezing.
    OneStep,
    /// Gradual unfreezing on target windows only.
    GuOnly,
    /// All groups trainable, loss regularized toward the base weights.
    Ewc,
    /// Only the decoder ever trains.
    TopLayerOnly,
    /// All groups trainable from the first epoch.
    NoGu,
    /// Fresh model trained on the target alone.
    Exclusive,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::OneStep,
        Strategy::GuOnly,
        Strategy::Ewc,
        Strategy::TopLayerOnly,
        Strategy::NoGu,
        Strategy::Exclusive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::OneStep => "one_step",
            Strategy::GuOnly => "gu_only",
            Strategy::Ewc => "ewc",
            Strategy::TopLayerOnly => "top_layer_only",
            Strategy::NoGu => "no_gu",
            Strategy::Exclusive => "exclusive",
        }
    }

    /// Schedule used when the config does not override it.
    pub fn default_schedule(self) -> ScheduleKind {
        match self {
            Strategy::OneStep | Strategy::GuOnly => ScheduleKind::Gradual,
            Strategy::TopLayerOnly => ScheduleKind::TopLayerOnly,
            Strategy::Ewc | Strategy::NoGu | Strategy::Exclusive => ScheduleKind::AllGroups,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TrainError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Gradual,
    TopLayerOnly,
    AllGroups,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Gradual => "gradual",
            ScheduleKind::TopLayerOnly => "top_layer_only",
            ScheduleKind::AllGroups => "all_groups",
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ScheduleKind::Gradual,
            ScheduleKind::TopLayerOnly,
            ScheduleKind::AllGroups,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| TrainError::InvalidConfig(format!("unknown schedule {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Epochs without a `min_delta` improvement of the training loss
    /// before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    /// Overrides the strategy's own schedule when set.
    pub schedule: Option<ScheduleKind>,
    /// Fraction of the source windows mixed in by `one_step`.
    pub mix_pct: f64,
    pub ewc_lambda: f64,
    pub fisher_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            epochs: 35,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: 5,
            min_delta: 1e-4,
            seed: 0,
            schedule: None,
            mix_pct: 0.05,
            ewc_lambda: 100.0,
            fisher_samples: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("Adam epsilon must be positive".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if !(self.min_delta >= 0.0) {
            return bad("min_delta must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.mix_pct) {
            return bad(format!("mix_pct {} must lie in [0, 1]", self.mix_pct));
        }
        if !(self.ewc_lambda >= 0.0 && self.ewc_lambda.is_finite()) {
            return bad("ewc_lambda must be a nonnegative number".into());
        }
        if self.fisher_samples == 0 {
            return bad("fisher_samples must be at least 1".into());
        }
        Ok(())
    }
}
