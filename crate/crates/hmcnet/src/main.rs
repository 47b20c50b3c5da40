//! Thin command-line front end. All logic lives in the library; this binary
//! parses arguments, applies flag overrides, and maps errors to the stable
//! exit codes (0 ok, 1 I/O, 2 validation, 3 numeric).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hmcnet::cli;
use hmcnet::config::RunConfig;
use hmcnet::hierarchy::RouteMode;

#[derive(Parser)]
#[command(
    name = "hmcnet",
    about = "Two-stage image classifier with Monte Carlo dropout uncertainty",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Soft,
    Hard,
}

impl From<ModeArg> for RouteMode {
    fn from(m: ModeArg) -> RouteMode {
        match m {
            ModeArg::Soft => RouteMode::Soft,
            ModeArg::Hard => RouteMode::Hard,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic dataset and its manifest.
    GenSynthetic {
        #[arg(long)]
        config: PathBuf,
        /// Override output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split, rebalance, train both stages, and persist the model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the training master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a persisted model on the config's test split, with and
    /// without uncertainty quantification.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Model directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Override the number of MC passes.
        #[arg(long = "T")]
        passes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the inference seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict one image and print the prediction JSON.
    Predict {
        /// Model directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        image: PathBuf,
        /// Number of MC passes (default 50).
        #[arg(long = "T")]
        passes: Option<usize>,
        #[arg(long, value_enum, default_value = "soft")]
        mode: ModeArg,
        /// Seed for the MC dropout streams.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(command: Command) -> hmcnet::Result<()> {
    match command {
        Command::GenSynthetic { config, out, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            if let (Some(seed), Some(synth)) = (seed, cfg.dataset.synthetic.as_mut()) {
                synth.seed = seed;
            }
            let manifest = cli::run_gen_synthetic(&cfg)?;
            println!("wrote {}", manifest.display());
        }
        Command::Train { config, out, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            if let Some(seed) = seed {
                cfg.training.seed = seed;
            }
            let artifacts = cli::run_train(&cfg)?;
            let s1 = &artifacts.outcome.stage1_log;
            let s2 = &artifacts.outcome.stage2_log;
            println!(
                "stage 1: {} samples ({} epochs, final loss {:.4})",
                s1.sample_count,
                s1.epoch_losses.len(),
                s1.epoch_losses.last().unwrap_or(&f64::NAN)
            );
            println!(
                "stage 2: {} samples ({} epochs, final loss {:.4})",
                s2.sample_count,
                s2.epoch_losses.len(),
                s2.epoch_losses.last().unwrap_or(&f64::NAN)
            );
            println!("model written to {}", artifacts.model_dir.display());
            println!("log written to {}", artifacts.log_path.display());
        }
        Command::Eval {
            config,
            model,
            passes,
            out,
            seed,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            if let Some(passes) = passes {
                cfg.inference.passes = passes;
            }
            if let Some(seed) = seed {
                cfg.inference.seed = seed;
            }
            let artifacts = cli::run_eval(&cfg, &model)?;
            let fmt = |r: &hmcnet::MetricsReport| {
                format!(
                    "accuracy {:.4}, macro F1 {:.4}, macro AUC {}",
                    r.accuracy,
                    r.macro_avg.f1,
                    r.macro_avg
                        .auc
                        .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"))
                )
            };
            println!("without UQ: {}", fmt(&artifacts.without_uq.report));
            println!(
                "with UQ (T={}): {}",
                artifacts.with_uq.report.passes,
                fmt(&artifacts.with_uq.report)
            );
            for file in &artifacts.files {
                println!("wrote {}", file.display());
            }
        }
        Command::Predict {
            model,
            image,
            passes,
            mode,
            seed,
        } => {
            let json = cli::run_predict(&model, &image, passes, mode.into(), seed)?;
            println!("{}", serde_json::to_string_pretty(&json).expect("valid JSON"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
