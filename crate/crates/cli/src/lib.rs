//! Scenario-driven front end for the `dstruct` library.
//!
//! Exit codes: 0 on success, 2 for invalid input (including scenario parse
//! errors), 3 when a solver fails to converge, 1 for I/O failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod bundled;
pub mod commands;
pub mod output;
pub mod scenario;

pub use scenario::ScenarioFile;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Convergence(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<dstruct::Error> for CliError {
    fn from(e: dstruct::Error) -> Self {
        match e {
            dstruct::Error::Convergence { .. } => CliError::Convergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dstruct", version, about = "Deformational structures: forms, strain, elasticity, motions and deformation classes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the scenario tolerance (solver, Killing or symplectic check).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// JSON indentation width; 0 writes compact JSON.
    #[arg(long, global = true, default_value_t = 2)]
    pub json_indent: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Table of admissible (m, k, d) triples as CSV.
    Admissible {
        #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true, default_values_t = [-5, 5])]
        m_range: Vec<i64>,
        #[arg(long, default_value_t = 4)]
        k_max: usize,
        #[arg(long, default_value_t = 7)]
        d_max: usize,
    },
    /// Flat matrix, determinant, trace and inverse of the ambient form.
    Flatten { scenario: PathBuf },
    /// Deformation form and its invariants for the current embedding.
    Strain { scenario: PathBuf },
    /// Energy density and stress of the current embedding.
    Energy { scenario: PathBuf },
    /// Static equilibrium.
    SolveStatic {
        scenario: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Stationary history between fixed end slices.
    SolveEvolution {
        scenario: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Killing (or conformal Killing) residual of a vector field.
    KillingCheck {
        scenario: PathBuf,
        #[arg(long)]
        conformal: bool,
    },
    /// Continuation graph and deformation type.
    Classify {
        scenario: PathBuf,
        /// Also write graph.dot.
        #[arg(long)]
        dot: bool,
    },
    /// Both sides of the symplectic gauge identity for a field.
    DemoSymplectic { scenario: PathBuf },
    /// Write the bundled scenarios into a directory.
    BundleExamples {
        /// Target directory; `<out>/scenarios` by default.
        dir: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
