use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataseries::{mix_source, Normalizer, Provenance, WindowedDataset};
use crate::gradflow::{Array, GradError, NodeId, Tape};
use crate::scalar::Scalar;
use crate::tsformer::{
    batch_array, forward_tape, parameter_groups, Checkpoint, ModelConfig, ModelParameters,
    ParamNodes, TrainingMeta, DECODER,
};

use super::{
    gu_schedule, Adam, AdamConfig, FisherDiag, FreezeSchedule, ScheduleKind, Strategy,
    TrainConfig, TrainError,
};

/// One row of the per-epoch training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// 1-based index into the schedule's phases.
    pub phase: usize,
    pub trainable_groups: Vec<String>,
    /// Sample-weighted mean of the batch objectives over the epoch.
    pub train_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<T> {
    pub checkpoint: Checkpoint<T>,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
    pub schedule: FreezeSchedule,
    /// Windows actually trained on, and how many of those came from the source.
    pub train_windows: usize,
    pub mixed_windows: usize,
}

/// Inputs of a fine-tuning run. All windows must already be normalized with
/// `normalizer`, which is stored in the resulting checkpoint.
#[derive(Clone, Copy, Debug)]
pub struct FinetuneData<'a, T> {
    pub target: &'a WindowedDataset<T>,
    pub source: Option<&'a WindowedDataset<T>>,
    pub fisher: Option<&'a FisherDiag<T>>,
    pub normalizer: &'a Normalizer<T>,
}

/// Owns a model during training and applies one optimizer step per batch.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub params: ModelParameters<T>,
    pub model_cfg: ModelConfig,
    adam: Adam<T>,
    penalty: Option<(FisherDiag<T>, T)>,
    epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(
        params: ModelParameters<T>,
        model_cfg: ModelConfig,
        adam: AdamConfig,
    ) -> Result<Self, TrainError> {
        params.check_layout(&model_cfg)?;
        Ok(Self {
            adam: Adam::new(adam, params.iter().map(|p| &p.value)),
            params,
            model_cfg,
            penalty: None,
            epoch: 0,
        })
    }

    /// Adds `(λ/2)·Σ F_i (θ_i − θ*_i)²` to every batch loss.
    pub fn with_penalty(mut self, fisher: FisherDiag<T>, lambda: T) -> Result<Self, TrainError> {
        fisher.weights.check_layout(&self.model_cfg)?;
        fisher.anchor.check_layout(&self.model_cfg)?;
        self.penalty = Some((fisher, lambda));
        Ok(self)
    }

    /// Epoch reported in `NonFiniteLoss` errors.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn optimizer(&self) -> &Adam<T> {
        &self.adam
    }

    /// One Adam step on a batch; groups outside `trainable` stay untouched.
    /// Returns the batch objective before the update.
    pub fn step(
        &mut self,
        inputs: &[&[T]],
        targets: &[&[T]],
        trainable: &[String],
    ) -> Result<T, TrainError> {
        let cfg = &self.model_cfg;
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(TrainError::ShapeMismatch("batch inputs and targets differ".into()));
        }
        let mut tape = Tape::new();
        let nodes = ParamNodes::register(&mut tape, &self.params, |g| {
            trainable.iter().any(|t| t == g)
        })?;
        let x = tape.constant(batch_array(cfg, inputs)?)?;
        let y = forward_tape(&mut tape, cfg, &nodes, x)?;
        let mut flat = Vec::with_capacity(targets.len() * cfg.horizon);
        for t in targets {
            if t.len() != cfg.horizon {
                return Err(TrainError::ShapeMismatch(format!(
                    "target of length {}, horizon {}",
                    t.len(),
                    cfg.horizon
                )));
            }
            flat.extend_from_slice(t);
        }
        let t = tape.constant(Array::new(vec![targets.len(), cfg.horizon], flat)?)?;
        let d = tape.sub(y, t)?;
        let a = tape.abs(d)?;
        let mut loss = tape.mean(a)?;
        if let Some((fisher, lambda)) = &self.penalty {
            if *lambda != T::zero() {
                let mut acc: Option<NodeId> = None;
                for (gi, ids) in nodes.groups.iter().enumerate() {
                    if !nodes.trainable[gi] {
                        continue;
                    }
                    let anchor = &fisher.anchor.groups[gi].params;
                    let weight = &fisher.weights.groups[gi].params;
                    for (pi, &id) in ids.iter().enumerate() {
                        let a0 = tape.constant(anchor[pi].value.clone())?;
                        let f = tape.constant(weight[pi].value.clone())?;
                        let diff = tape.sub(id, a0)?;
                        let sq = tape.mul(diff, diff)?;
                        let w = tape.mul(sq, f)?;
                        let s = tape.sum(w)?;
                        acc = Some(match acc {
                            Some(prev) => tape.add(prev, s)?,
                            None => s,
                        });
                    }
                }
                if let Some(total) = acc {
                    let scaled = tape.scale(total, *lambda / T::of(2.0))?;
                    loss = tape.add(loss, scaled)?;
                }
            }
        }
        let value = tape.value(loss).item().expect("scalar loss");
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch: self.epoch });
        }
        let mut grads = tape.backward(loss)?;
        let flags: Vec<Option<Array<T>>> = nodes
            .groups
            .iter()
            .zip(&nodes.trainable)
            .flat_map(|(ids, &on)| ids.iter().map(move |&id| (id, on)))
            .map(|(id, on)| if on { grads.take(id) } else { None })
            .collect();
        self.adam.step(self.params.values_mut(), &flags)?;
        if self.params.iter().any(|p| !p.value.is_finite()) {
            return Err(TrainError::NonFiniteLoss { epoch: self.epoch });
        }
        Ok(value)
    }

    /// Runs the epoch loop: seeded reshuffle each epoch, mini-batches, and
    /// early stopping on the training loss. The plateau counter restarts when
    /// the phase changes, and only the final phase may stop the run.
    pub fn run(
        &mut self,
        data: &WindowedDataset<T>,
        cfg: &TrainConfig,
        schedule: &FreezeSchedule,
    ) -> Result<(Vec<EpochLog>, bool), TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let last_phase = schedule.phases.len() - 1;
        let mut log = Vec::with_capacity(schedule.total_epochs);
        let mut best = f64::INFINITY;
        let mut wait = 0;
        let mut current = usize::MAX;
        for epoch in 0..schedule.total_epochs {
            self.set_epoch(epoch);
            let phase = schedule.phase_index(epoch);
            if phase != current {
                current = phase;
                wait = 0;
            }
            let trainable = schedule.trainable_at(epoch);
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let xs: Vec<&[T]> = chunk.iter().map(|&i| data.inputs[i].as_slice()).collect();
                let ys: Vec<&[T]> = chunk.iter().map(|&i| data.targets[i].as_slice()).collect();
                let loss = self.step(&xs, &ys, trainable).map_err(|e| match e {
                    TrainError::Grad(GradError::NonFiniteInput) => TrainError::NonFiniteLoss { epoch },
                    other => other,
                })?;
                total += loss.as_f64() * chunk.len() as f64;
            }
            let loss = total / data.len() as f64;
            log.push(EpochLog {
                epoch,
                phase: phase + 1,
                trainable_groups: trainable.to_vec(),
                train_loss: loss,
            });
            if loss < best - cfg.min_delta {
                best = loss;
                wait = 0;
            } else {
                wait += 1;
            }
            if wait >= cfg.patience && phase == last_phase {
                return Ok((log, true));
            }
        }
        Ok((log, false))
    }
}

fn adam_config(cfg: &TrainConfig) -> AdamConfig {
    AdamConfig {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
    }
}

fn check_data<T: Scalar>(ds: &WindowedDataset<T>, cfg: &ModelConfig) -> Result<(), TrainError> {
    if ds.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if ds.lookback != cfg.lookback || ds.horizon != cfg.horizon || ds.features != cfg.features {
        return Err(TrainError::ShapeMismatch(format!(
            "dataset {} has m={}, h={}, F={} but the model expects m={}, h={}, F={}",
            ds.domain, ds.lookback, ds.horizon, ds.features, cfg.lookback, cfg.horizon, cfg.features
        )));
    }
    Ok(())
}

/// Trains a fresh model on (normalized) source windows with every group
/// trainable.
pub fn pretrain<T: Scalar>(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    source_train: &WindowedDataset<T>,
    normalizer: &Normalizer<T>,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    model_cfg.validate()?;
    check_data(source_train, model_cfg)?;
    let params = ModelParameters::init(model_cfg, cfg.seed)?;
    let schedule = FreezeSchedule::constant(cfg.epochs, params.group_names())?;
    let mut trainer = Trainer::new(params, model_cfg.clone(), adam_config(cfg))?;
    let (log, stopped_early) = trainer.run(source_train, cfg, &schedule)?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: model_cfg.clone(),
            params: trainer.params,
            normalizer: normalizer.clone(),
            meta: TrainingMeta {
                seed: cfg.seed,
                epochs_run: log.len(),
                source_domain: source_train.domain.clone(),
                domain: source_train.domain.clone(),
                strategy: "pretrain".into(),
            },
        },
        log,
        stopped_early,
        schedule,
        train_windows: source_train.len(),
        mixed_windows: 0,
    })
}

/// Fine-tunes `base` on the target domain with `strategy`. `base` is never
/// modified; `exclusive` only takes its model config.
pub fn finetune<T: Scalar>(
    strategy: Strategy,
    base: &Checkpoint<T>,
    data: FinetuneData<'_, T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    let model_cfg = &base.config;
    check_data(data.target, model_cfg)?;
    if let Some(src) = data.source {
        check_data(src, model_cfg)?;
    }

    let mix = |pct: f64| -> Result<WindowedDataset<T>, TrainError> {
        match data.source {
            Some(src) if pct > 0.0 => Ok(mix_source(data.target, src, pct, cfg.seed)?),
            _ => Ok(data.target.clone()),
        }
    };
    let train = match strategy {
        Strategy::OneStep => {
            if data.source.is_none() {
                return Err(TrainError::MissingSource);
            }
            mix(cfg.mix_pct)?
        }
        Strategy::TopLayerOnly | Strategy::NoGu => mix(cfg.mix_pct)?,
        Strategy::GuOnly | Strategy::Ewc | Strategy::Exclusive => data.target.clone(),
    };

    let params = match strategy {
        Strategy::Exclusive => ModelParameters::init(model_cfg, cfg.seed)?,
        _ => base.params.clone(),
    };
    let groups = parameter_groups(&params);
    let schedule = match cfg.schedule.unwrap_or(strategy.default_schedule()) {
        ScheduleKind::Gradual => gu_schedule(cfg.epochs, &groups)?,
        ScheduleKind::TopLayerOnly => FreezeSchedule::constant(cfg.epochs, vec![DECODER.to_string()])?,
        ScheduleKind::AllGroups => FreezeSchedule::constant(cfg.epochs, groups)?,
    };

    let mut trainer = Trainer::new(params, model_cfg.clone(), adam_config(cfg))?;
    if strategy == Strategy::Ewc {
        let fisher = data.fisher.ok_or(TrainError::MissingFisher)?;
        if cfg.ewc_lambda != 0.0 {
            trainer = trainer.with_penalty(fisher.clone(), T::of(cfg.ewc_lambda))?;
        }
    }
    let (log, stopped_early) = trainer.run(&train, cfg, &schedule)?;

    let source_domain = match strategy {
        Strategy::Exclusive => data.target.domain.clone(),
        _ if base.meta.source_domain.is_empty() => base.meta.domain.clone(),
        _ => base.meta.source_domain.clone(),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: model_cfg.clone(),
            params: trainer.params,
            normalizer: data.normalizer.clone(),
            meta: TrainingMeta {
                seed: cfg.seed,
                epochs_run: log.len(),
                source_domain,
                domain: data.target.domain.clone(),
                strategy: strategy.name().into(),
            },
        },
        log,
        stopped_early,
        schedule,
        train_windows: train.len(),
        mixed_windows: train.count_of(Provenance::SourceMixed),
    })
}

/// Writes `epoch,phase,trainable_groups,train_loss` rows; group names are
/// joined with `;`.
pub fn write_training_log<W: Write>(log: &[EpochLog], out: W) -> Result<(), TrainError> {
    let io = |e: csv::Error| TrainError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "phase", "trainable_groups", "train_loss"]).map_err(io)?;
    for row in log {
        w.write_record([
            row.epoch.to_string(),
            row.phase.to_string(),
            row.trainable_groups.join(";"),
            format!("{:?}", row.train_loss),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| TrainError::Io(e.to_string()))
}
