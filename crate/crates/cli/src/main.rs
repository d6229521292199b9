//! `fedbench`: configuration-driven federated learning experiments.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fedbench_core::eval::TieRule;
use fedbench_core::par::Execution;

use commands::Context;
use error::{CliResult, Failure};

#[derive(Parser)]
#[command(name = "fedbench", version, about = "Cross-silo federated learning benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output root; results go to <out>/<name>/.
    #[arg(long, env = "FEDBENCH_OUT")]
    out: Option<PathBuf>,
    /// Comma-separated run seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tie {
    Competition,
    Average,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replicate and write histories, metrics and a summary.
    Run(Common),
    /// Grid search scored by the minimum aggregated validation loss.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// JSON object of strategy parameter -> list of values.
        #[arg(long)]
        sweep: PathBuf,
    },
    /// Siloed, central and per-client local baselines.
    Baselines(Common),
    /// Compare latest, global and local checkpoints from the same runs.
    AblateCheckpoints(Common),
    /// Rank methods from metrics.json reports.
    Rank {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, env = "FEDBENCH_OUT")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "competition")]
        tie: Tie,
    },
    /// Built-in demonstrations.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Print the 30-step scalar FedAdam trajectory as CSV.
    FedadamDrift,
}

fn execution(threads: Option<usize>) -> CliResult<Execution> {
    match threads {
        Some(0) => Err(Failure::Config("--threads must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Other(format!("thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn context(c: Common) -> CliResult<Context> {
    let exec = execution(c.threads)?;
    Context::load(&c.config, c.out, c.seeds, exec)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(c) => commands::cmd_run(&context(c)?),
        Command::Sweep { common, sweep } => commands::cmd_sweep(&context(common)?, &sweep),
        Command::Baselines(c) => commands::cmd_baselines(&context(c)?),
        Command::AblateCheckpoints(c) => commands::cmd_ablate_checkpoints(&context(c)?),
        Command::Rank { reports, out, tie } => {
            let tie = match tie {
                Tie::Competition => TieRule::Competition,
                Tie::Average => TieRule::Average,
            };
            commands::cmd_rank(
                &reports,
                &out.unwrap_or_else(|| PathBuf::from(commands::DEFAULT_OUT)),
                tie,
            )
        }
        Command::Demo {
            which: Demo::FedadamDrift,
        } => {
            commands::cmd_demo_drift();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("fedbench: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
