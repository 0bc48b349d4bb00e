//! `kse`: simulate the 2D Kuramoto–Sivashinsky equation, solve for its
//! equilibria and train the search and navigation agents.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kse_core::KseError;

/// Default output root when `--out` is not given.
pub const OUTPUT_ROOT_VAR: &str = "KSE_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "kse", version, about = "Equilibria of the 2D Kuramoto–Sivashinsky equation")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set dt=0.025`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads for parallel environments; 1 is fully deterministic.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory; defaults to `$KSE_OUTPUT_ROOT/<command>` (or `runs/<command>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Grid,
    Dt,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unforced or constant-forcing run, or a resolution check.
    Simulate {
        #[arg(long, value_enum)]
        check: Option<Check>,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// Initial state (`.kse`); a relaxed random state otherwise.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Start from the zero field.
        #[arg(long, conflicts_with = "init")]
        zero: bool,
        /// Constant actuator amplitudes, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        action: Option<Vec<f64>>,
    },
    /// Newton–Krylov hookstep solve from one guess.
    Jfnk {
        /// Guess (`.kse`); a relaxed random state otherwise.
        #[arg(long)]
        guess: Option<PathBuf>,
        /// Admit a converged solution into this store.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Train the identification agent and collect verified equilibria.
    Find {
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Train the navigation agent toward a stored equilibrium.
    Navigate {
        #[arg(long)]
        goal: String,
        #[arg(long)]
        store: PathBuf,
    },
    /// Newton iterations from raw guesses against policy-improved guesses.
    Compare {
        /// Agent checkpoint written by `find`.
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Actuator count and width grid sweep of the navigation objective.
    Sweep {
        #[arg(long)]
        goal: String,
        #[arg(long)]
        store: PathBuf,
    },
    /// Re-verify every record of a store, or a single state file.
    Verify {
        #[arg(long, required_unless_present = "file")]
        store: Option<PathBuf>,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Coefficient table of a store, plus optional graymap images.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        pgm: bool,
    },
}

/// Failure classes with their exit statuses.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    NotConverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::NotConverged(_) => 3,
        }
    }
}

impl From<KseError> for Failure {
    fn from(e: KseError) -> Self {
        match e {
            KseError::BlowUp { .. }
            | KseError::NonFinite { .. }
            | KseError::NotHermitian { .. }
            | KseError::Verification { .. }
            | KseError::Ingest { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Numerical(m) | Failure::NotConverged(m) => m,
            };
            eprintln!("kse: {msg}");
            ExitCode::from(f.code())
        }
    }
}
