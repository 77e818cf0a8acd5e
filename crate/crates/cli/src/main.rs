use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use nrr_cli::{
    execute, parse_models, parse_seeds, CliError, CliResult, ExperimentConfig, Overrides, Stage,
};

/// Nitrogen response rate pipeline.
///
/// The master seed comes from `master_seed` in the config file; the
/// NRR_MASTER_SEED environment variable overrides it.
#[derive(Parser)]
#[command(name = "nrr", version, about)]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true, default_value = "nrr.toml")]
    config: PathBuf,
    /// Models to train, evaluate or report: rf, mlp, ae, dae or all (comma separated).
    #[arg(long, global = true)]
    model: Option<String>,
    /// Seed list, e.g. `1..5` or `1,2,7`.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `jobs`).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario grid and write dataset files.
    Generate,
    /// Build samples, split by year and standardize per site.
    Preprocess,
    /// Train every selected model once per seed.
    Train,
    /// Predict the test partition with every checkpoint.
    Evaluate,
    /// Aggregate metrics, monthly residual candles and gate verdicts.
    Report,
    /// All stages in order.
    RunAll,
}

fn overrides(cli: &Cli) -> CliResult<Overrides> {
    let flag = |name: &'static str| move |e: String| CliError::config(format!("--{name}: {e}"));
    Ok(Overrides {
        models: cli
            .model
            .as_deref()
            .map(parse_models)
            .transpose()
            .map_err(flag("model"))?,
        seeds: cli
            .seeds
            .as_deref()
            .map(parse_seeds)
            .transpose()
            .map_err(flag("seeds"))?,
        output_dir: cli.out.clone(),
        jobs: cli.jobs,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let stage = match cli.command {
        Command::Generate => Stage::Generate,
        Command::Preprocess => Stage::Preprocess,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
        Command::RunAll => Stage::RunAll,
    };
    let result = overrides(&cli)
        .and_then(|o| {
            let c =
                ExperimentConfig::load(&cli.config).map_err(|e| e.context(cli.config.display()))?;
            c.apply(&o)
        })
        .and_then(|c| execute(stage, c));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
