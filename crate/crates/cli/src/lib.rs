//! Command-line front end for the holostrip experiments.
//!
//! Every subcommand produces a JSON report and an exit code: 0 when all of
//! its checks pass, 1 when one fails (the report is still written), 2 on a
//! usage or configuration error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

pub mod commands;
pub mod config;
pub mod io;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] holostrip::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Shooting,
    Fd,
}

#[derive(Debug, Parser)]
#[command(
    name = "holostrip",
    version,
    about = "Experiments on pseudoholomorphic strips near an elliptic singularity"
)]
pub struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Residual, energy and composition checks on the explicit solution.
    VerifyExact {
        #[arg(long, allow_hyphen_values = true)]
        epsilon: f64,
        /// Grid size as NSxNT.
        #[arg(long, default_value = "200x20")]
        grid: String,
        /// Strip section as A:B.
        #[arg(long, default_value = "-3:3", allow_hyphen_values = true)]
        s_range: String,
    },
    /// Spectrum of the asymptotic operator.
    Spectrum {
        #[arg(long, allow_hyphen_values = true)]
        q0: f64,
        #[arg(long, value_enum, default_value = "shooting")]
        method: MethodArg,
        /// Intervals for the finite-difference method.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Search range as LO,HI.
        #[arg(long, default_value = "-7,7", allow_hyphen_values = true)]
        range: String,
    },
    /// Decay exponent, rates and convexity along the explicit solution.
    Decay {
        #[arg(long, allow_hyphen_values = true)]
        epsilon: f64,
        #[arg(long, default_value = "4:10", allow_hyphen_values = true)]
        s_range: String,
        /// Nodes in t; the s spacing is matched to the t spacing.
        #[arg(long, default_value_t = 65)]
        nt: usize,
        /// Start of the fit window.
        #[arg(long)]
        burn_in: Option<f64>,
        /// Where the eigenvector direction is compared.
        #[arg(long, default_value_t = 8.0)]
        check_at: f64,
        /// Also write the alpha trace as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Gauss-Newton solve described by a config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Thurston-Bennequin degree and signed count of a profile CSV.
    Tb {
        #[arg(long)]
        profile: PathBuf,
    },
    /// Compatibility identities at seeded chart points.
    Compat {
        #[arg(long)]
        config: PathBuf,
    },
}

/// A finished report and whether all of its checks passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub ok: bool,
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let outcome = match pool.install(|| commands::run(&cli)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let text = io::to_json_string(&outcome.report);
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return 2;
    }
    if outcome.ok {
        0
    } else {
        1
    }
}
