use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsf_cli::commands::{self, Context};
use lsf_cli::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "lsf", version, about = "Design programmable multi-qubit XX gates for trapped-ion crystals")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "lsf.json")]
    config: PathBuf,
    /// First pool seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Normal modes, Lamb-Dicke parameters and the shortest gate time.
    Crystal,
    /// Aggregate a pool of zero-phase drives.
    Pool,
    /// Convert and refine a pool toward the configured target.
    Solve {
        /// Pool file; `pool.json` in the output directory when absent.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Also write per-ion power and per-tone statistics of the best solution.
        #[arg(long)]
        emit_spectrum: bool,
    },
    /// Refine the solutions in a solution file further.
    Refine {
        /// Solution file; `solutions.json` in the output directory when absent.
        #[arg(long)]
        solutions: Option<PathBuf>,
    },
    /// Time-step a solution through the spin-phonon dynamics.
    Simulate {
        /// Solution file; `solutions.json` in the output directory when absent.
        #[arg(long)]
        solutions: Option<PathBuf>,
        /// Rank of the solution to simulate.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Predicted power, shortest gate time and single-pair reference.
    Estimate,
    /// Best power over crystal sizes and gate times.
    Scaling,
    /// Best power over many targets at one crystal and gate time.
    Collapse,
    /// Global versus multi-address pools on the same targets.
    CompareAnsatz,
}

fn run(cli: Cli) -> CliResult<String> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let config = RunConfig::load(&cli.config)?;
    let ctx = Context::new(config, cli.seed, cli.out)?;
    let or_out = |p: Option<PathBuf>, name: &str| p.unwrap_or_else(|| ctx.out.join(name));
    match cli.verb {
        Verb::Crystal => commands::crystal(&ctx),
        Verb::Pool => commands::pool(&ctx),
        Verb::Solve { pool, emit_spectrum } => commands::solve_cmd(&ctx, &or_out(pool, "pool.json"), emit_spectrum),
        Verb::Refine { solutions } => commands::refine_cmd(&ctx, &or_out(solutions, "solutions.json")),
        Verb::Simulate { solutions, index } => commands::simulate_cmd(&ctx, &or_out(solutions, "solutions.json"), index),
        Verb::Estimate => commands::estimate_cmd(&ctx),
        Verb::Scaling => commands::scaling_cmd(&ctx),
        Verb::Collapse => commands::collapse_cmd(&ctx),
        Verb::CompareAnsatz => commands::compare_cmd(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
