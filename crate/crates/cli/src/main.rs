use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fiberlab_cli::{run, CliError, ExperimentConfig, RunOptions, Subcommand};

/// Stationary Floquet-Bloch experiments for random Schrodinger operators.
#[derive(Debug, Parser)]
#[command(name = "fiberlab", version)]
struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Config file, `key = value` lines or JSON. Defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Base seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Affects speed only, never results.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fiberlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Rejected("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Rejected(format!("thread pool: {e}")))?;
    }
    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let opts = RunOptions {
        out: args.out.clone(),
        seed: args.seed,
        threads: args.threads,
    };
    run(args.subcommand, config, &opts)
}
