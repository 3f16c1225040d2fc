//! Experiment driver behind the `fiberlab` binary.
//!
//! A run validates its configuration, computes every output in memory and
//! only then writes files, each through a temporary name and a rename. A
//! rejected or failed run therefore leaves the output directory untouched.

pub mod config;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

pub use config::{ExperimentConfig, Subcommand};
pub use output::{write_atomic, OutputFile, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The request was invalid before or during validation.
    #[error("rejected: {0}")]
    Rejected(String),
    /// The computation ran but could not certify its result.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 2 for rejected input, 3 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Rejected(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<fiberlab::Error> for CliError {
    fn from(e: fiberlab::Error) -> Self {
        if e.is_rejection() {
            CliError::Rejected(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

/// Options that come from the command line rather than the config file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Merge command-line overrides into the config and check the subcommand.
pub fn resolve(sub: Subcommand, mut config: ExperimentConfig, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    match config.subcommand {
        Some(s) if s != sub => {
            return Err(CliError::Rejected(format!(
                "config is for `{}` but `{}` was requested",
                s.name(),
                sub.name()
            )))
        }
        _ => config.subcommand = Some(sub),
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

/// Run one experiment and write its data files plus `manifest.json`.
/// Returns the paths written, manifest last.
pub fn run(sub: Subcommand, config: ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let config = resolve(sub, config, opts.seed)?;
    let start = Instant::now();
    let files = experiments::dispatch(sub, &config)?;
    let wall = start.elapsed().as_secs_f64();

    let manifest = json!({
        "tool": "fiberlab",
        "library_version": fiberlab::VERSION,
        "subcommand": sub.name(),
        "config": config,
        "seeds": {
            "base": config.seed,
            "realization_rule": "realization i uses seed base XOR i",
        },
        "threads": opts.threads.unwrap_or_else(rayon::current_num_threads),
        "wall_time_seconds": wall,
        "files": files.iter().map(|f| f.name.clone()).collect::<Vec<_>>(),
    });
    let manifest = OutputFile {
        name: "manifest.json".into(),
        contents: serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    };

    create_dir(&opts.out)?;
    let mut written = Vec::new();
    for f in files.iter().chain(std::iter::once(&manifest)) {
        let path = opts.out.join(&f.name);
        write_atomic(&path, f.contents.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}
