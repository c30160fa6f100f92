use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crackscan_cli::config::{LossName, Resolution, RunConfig};
use crackscan_cli::error::CliError;
use crackscan_cli::stages::{self, Ctx, InferOptions, TrainOptions};
use crackscan_core::illumsim::{LightingConfig, RigGeometry};

#[derive(Parser)]
#[command(
    name = "crackscan",
    version,
    about = "Crack inspection pipeline: synthetic tiles, patch datasets, baseline training, detection metrics"
)]
struct Cli {
    /// Run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for all pipeline artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic tile stacks.
    Synth,
    /// Extract and label sliding-window patches.
    Extract {
        #[arg(long, value_enum)]
        resolution: Resolution,
    },
    /// Plan the k-fold tile assignment.
    Split,
    /// Train baseline models per lighting config and fold.
    Train {
        #[arg(long, value_enum)]
        resolution: Resolution,
        /// Lighting config name, or "all" for the config's selection.
        #[arg(long, default_value = "all")]
        lighting: String,
        /// Loss override: ce, mfe, or focal.
        #[arg(long, value_enum)]
        loss: Option<LossName>,
        /// Balanced-input override.
        #[arg(long)]
        balanced: Option<bool>,
    },
    /// Produce detection masks and per-origin score files.
    Infer {
        #[arg(long, value_enum)]
        resolution: Resolution,
        #[arg(long, default_value = "all")]
        lighting: String,
        /// Model directory name (defaults to the config's training regime).
        #[arg(long)]
        model: Option<String>,
        /// External prediction CSV used instead of a trained model.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Compute the metric suite report.
    Eval {
        #[arg(long, value_enum)]
        resolution: Resolution,
    },
    /// Print an evaluated report.
    Report {
        #[arg(long, value_enum)]
        resolution: Resolution,
    },
    /// Replay a rig protocol script and write its transcript.
    Rig {
        /// Script of newline-separated rig commands.
        #[arg(long)]
        script: PathBuf,
        /// Exit nonzero on the first protocol error.
        #[arg(long)]
        strict: bool,
    },
}

fn load_ctx(cli: &Cli) -> Result<Ctx, CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| CliError::Config("--out is required for this command".into()))?;
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        config.global_seed = seed;
    }
    Ctx::new(config, out.clone())
}

fn parse_lighting(selection: &str, config: &RunConfig) -> Result<Vec<LightingConfig>, CliError> {
    if selection == "all" {
        return Ok(config.lighting.clone());
    }
    let cfg = LightingConfig::from_name(selection).ok_or_else(|| {
        CliError::Config(format!(
            "unknown lighting '{selection}' (expected all, all_lights, only_level1..only_level4)"
        ))
    })?;
    Ok(vec![cfg])
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth => stages::cmd_synth(&load_ctx(cli)?),
        Command::Extract { resolution } => stages::cmd_extract(&load_ctx(cli)?, *resolution),
        Command::Split => stages::cmd_split(&load_ctx(cli)?),
        Command::Train {
            resolution,
            lighting,
            loss,
            balanced,
        } => {
            let ctx = load_ctx(cli)?;
            let opts = TrainOptions {
                lightings: parse_lighting(lighting, &ctx.config)?,
                loss: *loss,
                balanced: *balanced,
            };
            stages::cmd_train(&ctx, *resolution, &opts)
        }
        Command::Infer {
            resolution,
            lighting,
            model,
            predictions,
        } => {
            let ctx = load_ctx(cli)?;
            let opts = InferOptions {
                lightings: parse_lighting(lighting, &ctx.config)?,
                model: model.clone(),
                predictions: predictions.clone(),
            };
            stages::cmd_infer(&ctx, *resolution, &opts)
        }
        Command::Eval { resolution } => stages::cmd_eval(&load_ctx(cli)?, *resolution),
        Command::Report { resolution } => stages::cmd_report(&load_ctx(cli)?, *resolution),
        Command::Rig { script, strict } => {
            // Geometry comes from the config when given, defaults otherwise.
            let geom = match &cli.config {
                Some(path) => RunConfig::load(path)?.rig,
                None => RigGeometry::default(),
            };
            let transcript = cli.out.as_ref().map(|out| out.join("transcript.txt"));
            let outcome = stages::cmd_rig(script, &geom, *strict, transcript.as_deref())?;
            print!("{}", outcome.transcript);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
