//! `flowsim` command-line driver.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 for a bad
//! configuration (nothing is written), 3 when simulation or output fails.

mod args;
mod commands;
mod input;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("simulation error: {0}")]
    Simulation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
        }
    }
}

fn workers_of(cmd: &Command) -> Option<usize> {
    match cmd {
        Command::Flow(a) => a.common.workers,
        Command::Coalesce(a) => a.common.workers,
        Command::Diagnose(a) => a.common.workers,
        Command::Converge(a) => a.common.workers,
        Command::Wasserstein(_) => None,
    }
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let workers = workers_of(&cli.command);
    if workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Simulation(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Flow(a) => commands::flow(a),
        Command::Coalesce(a) => commands::coalesce(a),
        Command::Wasserstein(a) => commands::transport(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Converge(a) => commands::converge(a),
    })
}

fn commit(outcome: &commands::Outcome) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Simulation(format!("writing output: {e}"));
    for (path, _) in &outcome.files {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
    }
    let files: Vec<(&Path, &[u8])> = outcome.files.iter().map(|(p, b)| (p.as_path(), b.as_slice())).collect();
    flowsim::io::write_atomic_all(&files).map_err(io_err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match run(cli).and_then(|o| commit(&o).map(|()| o)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("flowsim: {e}");
            return ExitCode::from(e.code());
        }
    };
    print!("{}", outcome.stdout);
    if outcome.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
