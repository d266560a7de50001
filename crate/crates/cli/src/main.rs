use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tsft_cli::{CliError, FinetuneArgs, LoadedConfig, PctChoice};

#[derive(Parser)]
#[command(name = "tsft", version, about = "Transformer fine-tuning for data-poor time-series domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; overrides the config and $TSFT_OUTPUT_ROOT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train the source model.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune a checkpoint on one target domain.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// one_step, gu_only, ewc, top_layer_only, no_gu or exclusive.
        #[arg(long)]
        strategy: String,
        /// Pre-trained checkpoint (optional only for `exclusive`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        target: String,
        /// Fraction of source windows to mix in.
        #[arg(long, conflicts_with = "auto_pct")]
        pct: Option<f64>,
        /// Pick the fraction from the MMD of the target to the source.
        #[arg(long)]
        auto_pct: bool,
    },
    /// Write the MMD report of every target against the source.
    Mmd {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full protocol into a fresh output tree.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Replace an existing, non-empty output directory.
        #[arg(long)]
        force: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pretrain { common } => {
            let cfg = LoadedConfig::from_file(&common.config)?;
            let path = tsft_cli::pretrain(&cfg, &cfg.output_dir(common.out.as_deref()))?;
            println!("{}", path.display());
        }
        Command::Finetune {
            common,
            strategy,
            checkpoint,
            target,
            pct,
            auto_pct,
        } => {
            let cfg = LoadedConfig::from_file(&common.config)?;
            let pct = match (pct, auto_pct) {
                (Some(p), _) => PctChoice::Fixed(p),
                (None, true) => PctChoice::Auto,
                (None, false) => PctChoice::Config,
            };
            let args = FinetuneArgs {
                strategy,
                checkpoint,
                target,
                pct,
            };
            let path = tsft_cli::finetune(&cfg, &args, &cfg.output_dir(common.out.as_deref()))?;
            println!("{}", path.display());
        }
        Command::Mmd { common } => {
            let cfg = LoadedConfig::from_file(&common.config)?;
            let report = tsft_cli::mmd(&cfg, &cfg.output_dir(common.out.as_deref()))?;
            for r in &report.rows {
                println!("{} {} mmd2={:?} pct={:?}", report.source, r.target, r.mmd2, r.recommended_pct);
            }
        }
        Command::Experiment { common, force } => {
            let cfg = LoadedConfig::from_file(&common.config)?;
            let out = cfg.output_dir(common.out.as_deref());
            tsft_cli::experiment(&cfg, &out, force)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tsft: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
