use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod files;

use error::CliError;
use hierlat::config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "hierlat",
    version,
    about = "Hierarchical latent factor anomaly detection for multivariate time series"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Master seed (same as --set seed=N).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Entities processed in parallel (same as --set workers=N).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log at debug level.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model per entity.
    Train(commands::TrainArgs),
    /// Score test series with trained models.
    Detect(commands::DetectArgs),
    /// Best-F1 report from score files and labels.
    Evaluate(commands::EvaluateArgs),
    /// Write a copy of a dataset with segment occlusion masks.
    Occlude(commands::OccludeArgs),
    /// Forecast the hidden tail of one window.
    Forecast(commands::ForecastArgs),
    /// Generate windows along a line between two inferred latents.
    Interpolate(commands::InterpolateArgs),
    /// Write a synthetic labeled dataset.
    Synth(commands::SynthArgs),
    /// Score test series with a model-free baseline.
    Baseline(commands::BaselineArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    MeanDeviation,
    Knn,
}

fn resolve_config(common: &Common, extra: &[(&str, String)]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text, &path.display().to_string())
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    for (k, v) in extra {
        cfg.set(k, v).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    log::info!("seed = {}", cfg.seed);
    log::info!("resolved configuration:\n{}", cfg.to_text().trim_end());
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let extra = match &cli.command {
        Command::Train(a) => a.overrides(),
        Command::Evaluate(a) => a.overrides(),
        Command::Occlude(a) => a.overrides(),
        Command::Forecast(a) => a.overrides(),
        Command::Baseline(a) => a.overrides(),
        Command::Detect(_) | Command::Interpolate(_) | Command::Synth(_) => Vec::new(),
    };
    let cfg = resolve_config(&cli.common, &extra)?;
    match &cli.command {
        Command::Train(a) => commands::train(a, &cfg),
        Command::Detect(a) => commands::detect(a, &cfg),
        Command::Evaluate(a) => commands::evaluate(a, &cfg),
        Command::Occlude(a) => commands::occlude(a, &cfg),
        Command::Forecast(a) => commands::forecast(a, &cfg),
        Command::Interpolate(a) => commands::interpolate(a, &cfg),
        Command::Synth(a) => commands::synth(a, &cfg),
        Command::Baseline(a) => commands::baseline(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.common.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
