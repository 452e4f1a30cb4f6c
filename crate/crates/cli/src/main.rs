use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dte_cli::{cmd_estimate, cmd_simulate, CliError, ExitCode, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "dte", version, about = "Regression-adjusted distributional treatment effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate CDF, DTE, PTE and QTE curves from a CSV file.
    Estimate(Common),
    /// Run a Monte Carlo study on the synthetic design.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    folds: Option<usize>,
    /// linear, lasso or gbt.
    #[arg(long)]
    learner: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "b-draws")]
    b_draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Result file; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (also read from DTE_THREADS); results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn threads(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("DTE_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| CliError::config(format!("DTE_THREADS must be a positive integer, got `{v}`")))?),
            Err(_) => None,
        },
    };
    match n {
        Some(0) => Err(CliError::config("thread count must be positive")),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::config(format!("cannot set up thread pool: {e}")))?;
            Ok(n)
        }
        None => Ok(rayon::current_num_threads()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, simulate) = match cli.command {
        Command::Estimate(c) => (c, false),
        Command::Simulate(c) => (c, true),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.apply(&Overrides {
        folds: common.folds,
        learner: common.learner.clone(),
        alpha: common.alpha,
        b_draws: common.b_draws,
        seed: common.seed,
        out: common.out.clone(),
    });
    let n_threads = threads(common.threads)?;
    let artifacts = if simulate {
        cmd_simulate(&cfg, n_threads, &|line| eprintln!("{line}"))?
    } else {
        cmd_estimate(&cfg)?
    };
    for w in &artifacts.warnings {
        eprintln!("warning [{}]: {}", w.kind, w.message);
    }
    artifacts.commit()
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        let label = match e.code {
            ExitCode::Config => "config error",
            ExitCode::Data => "data error",
            ExitCode::Runtime => "runtime error",
        };
        eprintln!("{label}: {e}");
        std::process::exit(e.code as i32);
    }
}
