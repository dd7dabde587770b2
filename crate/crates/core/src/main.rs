use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use routeplan::cli::{run_check, run_plan, run_sweep, RunOptions, ERROR_EXIT};

#[derive(Parser)]
#[command(name = "routeplan", version, about = "Plan GPU setups and routing fractions for multi-model LLM serving")]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Output directory for plan.toml / sweep.csv.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    parallelism: Option<usize>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Select the best setup and routing; writes plan.toml.
    Plan { config: PathBuf },
    /// Evaluate every retained setup; writes sweep.csv.
    Sweep { config: PathBuf },
    /// Validate config, profiles, memory table and scores.
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let opts = RunOptions { out_dir: args.out, parallelism: args.parallelism, seed: args.seed };
    let result = match &args.command {
        Command::Plan { config } => run_plan(config, &opts),
        Command::Sweep { config } => run_sweep(config, &opts),
        Command::Check { config } => run_check(config, &opts),
    };
    match result {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR_EXIT as u8)
        }
    }
}
