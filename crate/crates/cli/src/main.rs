use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use stormsafe_cli::artifacts::Ctx;
use stormsafe_cli::commands;
use stormsafe_cli::config::LoadedConfig;

#[derive(Parser)]
#[command(name = "stormsafe", version, about = "Nonstationary rainfall extremes and stormwater pipe safety factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides the config's `seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the stationary model and one nonstationary model per covariate
    Fit {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of models, e.g. `mdr_sst,stationary`
        #[arg(long, value_delimiter = ',')]
        covariates: Option<Vec<String>>,
    },
    /// Rank fitted models by DIC with the AIC tie-break
    Select {
        #[command(flatten)]
        common: Common,
    },
    /// Posterior return levels per fitted model
    Returns {
        #[command(flatten)]
        common: Common,
    },
    /// Lifetime reliability of the design pipe for each climate option
    Reliability {
        #[command(flatten)]
        common: Common,
        /// Safety factor on the baseline diameter
        #[arg(long, default_value_t = 1.0)]
        sf: f64,
    },
    /// Scenario grid and cumulative uncertainty decomposition
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Stage order, e.g. `runoff,climate,lifetime`
        #[arg(long)]
        stage_order: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        sf: f64,
    },
    /// Safety-factor sweep and minimal robust factor
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Figures and a markdown summary from earlier stages
    Report {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Fit { common, .. }
            | Command::Select { common }
            | Command::Returns { common }
            | Command::Reliability { common, .. }
            | Command::Decompose { common, .. }
            | Command::Sweep { common }
            | Command::Report { common } => common,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common();
    if let Some(j) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let cfg = LoadedConfig::load(&common.config, common.seed)?;
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let ctx = Ctx::new(cfg, common.out.clone());
    match &cli.command {
        Command::Fit { covariates, .. } => commands::fit(&ctx, covariates.clone()),
        Command::Select { .. } => commands::select(&ctx),
        Command::Returns { .. } => commands::returns(&ctx),
        Command::Reliability { sf, .. } => commands::reliability(&ctx, *sf),
        Command::Decompose { stage_order, sf, .. } => commands::decompose(&ctx, stage_order.as_deref(), *sf),
        Command::Sweep { .. } => commands::sweep(&ctx),
        Command::Report { .. } => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
