use std::fs;
use std::path::{Path, PathBuf};

use tsft_core::dataseries::Normalizer as Norm;
use tsft_core::domaindist::{rank_targets, write_report_csv, DomainSample, MmdReport};
use tsft_core::evalkit::{
    evaluate, forgetting_check, persistence_baseline, shift_check, summary_text,
    write_forgetting_csv, write_metrics_csv, write_predictions_csv, MetricsReport,
};
use tsft_core::trainloop::{
    self, fisher_estimate, write_training_log, FinetuneData, Strategy, TrainOutcome,
};
use tsft_core::tsformer::{load_checkpoint, save_checkpoint, ModelParameters, TrainingMeta};
use tsft_core::{Checkpoint, Fisher, Normalizer, Windows};

use crate::config::LoadedConfig;
use crate::data::{load_domain, DomainData};
use crate::manifest::{describe_schedule, Manifest};
use crate::{runtime, CliError};

/// Output tree: `checkpoints/`, `logs/`, `reports/`, `dumps/`.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        for sub in ["checkpoints", "logs", "reports", "dumps"] {
            fs::create_dir_all(root.join(sub))
                .map_err(|e| CliError::Config(format!("output directory {}: {e}", root.display())))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn checkpoint(&self, model: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{model}.ckpt"))
    }

    pub fn log(&self, model: &str) -> PathBuf {
        self.root.join("logs").join(format!("{model}.csv"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn dump(&self, model: &str, domain: &str) -> PathBuf {
        self.root.join("dumps").join(format!("{model}@{domain}.csv"))
    }
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub const SOURCE_MODEL: &str = "source";

pub fn finetuned_id(target: &str, strategy: Strategy) -> String {
    format!("{target}.{strategy}")
}

fn save_run(layout: &Layout, model: &str, out: &TrainOutcome<f64>) -> Result<(), CliError> {
    save_checkpoint(&out.checkpoint, &layout.checkpoint(model)).map_err(runtime)?;
    write_training_log(&out.log, create(&layout.log(model))?).map_err(runtime)
}

fn train_pretrain(cfg: &LoadedConfig, src: &DomainData) -> Result<(TrainOutcome<f64>, Normalizer), CliError> {
    let norm = Norm::fit(&src.train).map_err(runtime)?;
    let train = norm.apply(&src.train).map_err(runtime)?;
    let tc = cfg.train_config(&cfg.config.pretrain)?;
    let out = trainloop::pretrain(&tc, &cfg.model_config(), &train, &norm).map_err(runtime)?;
    Ok((out, norm))
}

fn record_run(m: &mut Manifest, model: &str, out: &TrainOutcome<f64>) {
    m.set(format!("run.{model}.epochs_run"), out.log.len().to_string());
    m.set(format!("run.{model}.stopped_early"), out.stopped_early.to_string());
    m.set(format!("run.{model}.schedule"), describe_schedule(&out.schedule));
    m.set(format!("run.{model}.train_windows"), out.train_windows.to_string());
    m.set(format!("run.{model}.mixed_windows"), out.mixed_windows.to_string());
}

/// `tsft pretrain`: trains the source model and writes its checkpoint,
/// epoch log and manifest.
pub fn pretrain(cfg: &LoadedConfig, out_dir: &Path) -> Result<PathBuf, CliError> {
    let layout = Layout::create(out_dir)?;
    let src = load_domain(cfg, &cfg.config.source)?;
    let (out, _) = train_pretrain(cfg, &src)?;
    save_run(&layout, SOURCE_MODEL, &out)?;
    let mut m = Manifest::new("pretrain", cfg);
    m.set("source", cfg.config.source.clone());
    record_run(&mut m, SOURCE_MODEL, &out);
    write_text(&layout.root.join("manifest.pretrain.txt"), &m.render(cfg))?;
    Ok(layout.checkpoint(SOURCE_MODEL))
}

fn samples(cfg: &LoadedConfig, src: &DomainData, targets: &[&DomainData]) -> Result<MmdReport, CliError> {
    let mc = cfg.mmd_config();
    let sample = |d: &DomainData| DomainSample::from_windows(&d.all, mc.cap, mc.seed).map_err(runtime);
    let s = sample(src)?;
    let ts = targets.iter().map(|d| sample(d)).collect::<Result<Vec<_>, _>>()?;
    rank_targets(&s, &ts, &mc).map_err(runtime)
}

/// `tsft mmd`: scores every target against the source.
pub fn mmd(cfg: &LoadedConfig, out_dir: &Path) -> Result<MmdReport, CliError> {
    let layout = Layout::create(out_dir)?;
    let src = load_domain(cfg, &cfg.config.source)?;
    let targets = cfg
        .config
        .targets
        .iter()
        .map(|t| load_domain(cfg, t))
        .collect::<Result<Vec<_>, _>>()?;
    let report = samples(cfg, &src, &targets.iter().collect::<Vec<_>>())?;
    write_report_csv(&report, create(&layout.report("mmd.csv"))?).map_err(runtime)?;
    let mut m = Manifest::new("mmd", cfg);
    m.set("mmd.sigma", format!("{:?}", report.sigma));
    m.set("mmd.threshold", format!("{:?}", report.threshold));
    write_text(&layout.root.join("manifest.mmd.txt"), &m.render(cfg))?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PctChoice {
    /// `finetune.mix_pct` from the config, or the built-in default.
    Config,
    Fixed(f64),
    /// Recommended by the MMD rule over the configured targets.
    Auto,
}

#[derive(Clone, Debug)]
pub struct FinetuneArgs {
    pub strategy: String,
    pub checkpoint: Option<PathBuf>,
    pub target: String,
    pub pct: PctChoice,
}

struct Prepared {
    target_train: Windows,
    source_train: Windows,
}

/// Normalizes target and source training windows with the target's statistics.
fn prepare(norm: &Normalizer, target: &DomainData, source: &DomainData) -> Result<Prepared, CliError> {
    Ok(Prepared {
        target_train: norm.apply(&target.train).map_err(runtime)?,
        source_train: norm.apply(&source.train).map_err(runtime)?,
    })
}

fn fisher_for(cfg: &LoadedConfig, base: &Checkpoint, source: &DomainData) -> Result<Fisher, CliError> {
    let tc = cfg.train_config(&cfg.config.finetune)?;
    let src = base.normalizer.apply(&source.train).map_err(runtime)?;
    fisher_estimate(base, &src, tc.fisher_samples, tc.seed).map_err(runtime)
}

fn run_finetune(
    cfg: &LoadedConfig,
    strategy: Strategy,
    base: &Checkpoint,
    target: &DomainData,
    source: &DomainData,
    pct: f64,
    fisher: Option<&Fisher>,
) -> Result<TrainOutcome<f64>, CliError> {
    let norm = Norm::fit(&target.train).map_err(runtime)?;
    let p = prepare(&norm, target, source)?;
    let mut tc = cfg.train_config(&cfg.config.finetune)?;
    tc.mix_pct = pct;
    tc.validate().map_err(|e| CliError::Config(format!("finetune: {e}")))?;
    let data = FinetuneData {
        target: &p.target_train,
        source: Some(&p.source_train),
        fisher,
        normalizer: &norm,
    };
    trainloop::finetune(strategy, base, data, &tc).map_err(runtime)
}

fn fresh_base(cfg: &LoadedConfig, source: &str) -> Result<Checkpoint, CliError> {
    let mc = cfg.model_config();
    Ok(Checkpoint {
        params: ModelParameters::init(&mc, cfg.config.seed).map_err(runtime)?,
        normalizer: Norm::identity(mc.features),
        config: mc,
        meta: TrainingMeta {
            seed: cfg.config.seed,
            source_domain: source.to_string(),
            domain: source.to_string(),
            ..TrainingMeta::default()
        },
    })
}

/// `tsft finetune`: adapts a checkpoint to one target with one strategy.
pub fn finetune(cfg: &LoadedConfig, args: &FinetuneArgs, out_dir: &Path) -> Result<PathBuf, CliError> {
    let strategy: Strategy = args
        .strategy
        .parse()
        .map_err(|e: trainloop::TrainError| CliError::Config(e.to_string()))?;
    if !cfg.config.targets.contains(&args.target) {
        return Err(CliError::Config(format!("--target {:?} is not a configured target", args.target)));
    }
    let base = match (&args.checkpoint, strategy) {
        (Some(p), _) => load_checkpoint::<f64>(p)
            .map_err(|e| CliError::Config(format!("--checkpoint {}: {e}", p.display())))?,
        (None, Strategy::Exclusive) => fresh_base(cfg, &cfg.config.source)?,
        (None, s) => return Err(CliError::Config(format!("strategy {s} needs --checkpoint"))),
    };
    if base.config != cfg.model_config() {
        return Err(CliError::Config("checkpoint model does not match the configured model".into()));
    }
    let layout = Layout::create(out_dir)?;
    let source = load_domain(cfg, &cfg.config.source)?;
    let target = load_domain(cfg, &args.target)?;
    let pct = match args.pct {
        PctChoice::Fixed(p) => p,
        PctChoice::Config => cfg.train_config(&cfg.config.finetune)?.mix_pct,
        PctChoice::Auto => {
            let others = cfg
                .config
                .targets
                .iter()
                .map(|t| if *t == target.id { Ok(target.clone()) } else { load_domain(cfg, t) })
                .collect::<Result<Vec<_>, _>>()?;
            let report = samples(cfg, &source, &others.iter().collect::<Vec<_>>())?;
            report.row(&target.id).expect("target ranked").recommended_pct
        }
    };
    let fisher = match strategy {
        Strategy::Ewc => Some(fisher_for(cfg, &base, &source)?),
        _ => None,
    };
    let out = run_finetune(cfg, strategy, &base, &target, &source, pct, fisher.as_ref())?;
    let model = finetuned_id(&target.id, strategy);
    save_run(&layout, &model, &out)?;
    let mut m = Manifest::new("finetune", cfg);
    m.set("strategy", strategy.name());
    m.set("target", target.id.clone());
    m.set("pct", format!("{pct:?}"));
    record_run(&mut m, &model, &out);
    write_text(&layout.root.join(format!("manifest.finetune.{model}.txt")), &m.render(cfg))?;
    Ok(layout.checkpoint(&model))
}

/// `tsft experiment`: the whole protocol into a fresh output tree. Refuses a
/// non-empty directory unless `force`; on failure leaves a `FAILED` marker
/// next to whatever was already written.
pub fn experiment(cfg: &LoadedConfig, out_dir: &Path, force: bool) -> Result<(), CliError> {
    let occupied = fs::read_dir(out_dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied {
        if !force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty (use --force to overwrite)",
                out_dir.display()
            )));
        }
        fs::remove_dir_all(out_dir)
            .map_err(|e| CliError::Config(format!("cannot clear {}: {e}", out_dir.display())))?;
    }
    let layout = Layout::create(out_dir)?;
    let result = run_experiment(cfg, &layout);
    if let Err(e) = &result {
        let _ = fs::write(layout.root.join("FAILED"), format!("{e}\n"));
    }
    result
}

fn run_experiment(cfg: &LoadedConfig, layout: &Layout) -> Result<(), CliError> {
    let mut m = Manifest::new("experiment", cfg);
    let source = load_domain(cfg, &cfg.config.source)?;
    let targets = cfg
        .config
        .targets
        .iter()
        .map(|t| load_domain(cfg, t))
        .collect::<Result<Vec<_>, _>>()?;

    let (pre, _) = train_pretrain(cfg, &source)?;
    save_run(layout, SOURCE_MODEL, &pre)?;
    record_run(&mut m, SOURCE_MODEL, &pre);
    let base = pre.checkpoint;

    let report = samples(cfg, &source, &targets.iter().collect::<Vec<_>>())?;
    write_report_csv(&report, create(&layout.report("mmd.csv"))?).map_err(runtime)?;
    m.set("mmd.sigma", format!("{:?}", report.sigma));
    m.set("mmd.threshold", format!("{:?}", report.threshold));

    let fixed_pct = cfg.config.finetune.mix_pct;
    let strategies = cfg.strategies();
    let fisher = if strategies.contains(&Strategy::Ewc) {
        Some(fisher_for(cfg, &base, &source)?)
    } else {
        None
    };

    let mut metrics: Vec<MetricsReport> = Vec::new();
    let eval_dump = |ckpt: &Checkpoint, model: &str, ds: &Windows| -> Result<MetricsReport, CliError> {
        let (r, dump) = evaluate(ckpt, ds, model).map_err(runtime)?;
        write_predictions_csv(&dump, create(&layout.dump(model, &ds.domain))?).map_err(runtime)?;
        Ok(r)
    };
    metrics.push(persistence_baseline(&source.test).map_err(runtime)?);
    metrics.push(eval_dump(&base, SOURCE_MODEL, &source.test)?);

    let mut tuned: Vec<(String, Checkpoint)> = Vec::new();
    for target in &targets {
        metrics.push(persistence_baseline(&target.test).map_err(runtime)?);
        metrics.push(eval_dump(&base, SOURCE_MODEL, &target.test)?);
        let pct = fixed_pct.unwrap_or_else(|| report.row(&target.id).expect("ranked").recommended_pct);
        for &s in &strategies {
            let model = finetuned_id(&target.id, s);
            let out = run_finetune(cfg, s, &base, target, &source, pct, fisher.as_ref())?;
            save_run(layout, &model, &out)?;
            record_run(&mut m, &model, &out);
            m.set(format!("run.{model}.pct"), format!("{pct:?}"));
            metrics.push(eval_dump(&out.checkpoint, &model, &target.test)?);
            tuned.push((model, out.checkpoint));
        }
    }
    write_metrics_csv(&metrics, create(&layout.report("metrics.csv"))?).map_err(runtime)?;
    write_text(&layout.report("summary.txt"), &summary_text(&metrics))?;

    let named: Vec<(&str, &Checkpoint)> = tuned.iter().map(|(n, c)| (n.as_str(), c)).collect();
    let forgetting = forgetting_check(&base, &named, &source.test).map_err(runtime)?;
    write_forgetting_csv(&forgetting, create(&layout.report("forgetting.csv"))?).map_err(runtime)?;

    let mut shift = Vec::new();
    let mut cells = vec![(SOURCE_MODEL, &base, String::new())];
    cells.extend(tuned.iter().map(|(n, c)| (n.as_str(), c, c.meta.domain.clone())));
    for (name, ckpt, own) in cells {
        let unseen: Vec<&Windows> = targets.iter().filter(|t| t.id != own).map(|t| &t.all).collect();
        if unseen.is_empty() {
            continue;
        }
        for row in shift_check(&[(name, ckpt)], &unseen).map_err(runtime)? {
            shift.extend(row);
        }
    }
    write_metrics_csv(&shift, create(&layout.report("shift.csv"))?).map_err(runtime)?;

    m.set("checkpoints", (1 + tuned.len()).to_string());
    m.set("metrics_reports", metrics.len().to_string());
    m.set("shift_reports", shift.len().to_string());
    write_text(&layout.root.join("manifest.txt"), &m.render(cfg))
}
