//! Command-line pipeline: simulate, fit, krige, cluster, diagnose, waic,
//! summarize.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 other failures (bad arguments, missing or mismatched stores, domain
//! errors), 5 numerical or sampler failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod commands;
pub mod config;
pub mod data;
pub mod geo;
pub mod store;

pub use commands::{predict_surfaces, PredictedSurface};
pub use config::{LoadedConfig, RunConfig};

/// Run metadata stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    /// Short hash of the configuration file, or `"none"`.
    pub config: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config: &LoadedConfig, seed: u64) -> Self {
        Provenance { version: env!("CARGO_PKG_VERSION").into(), config: config.hash.clone(), seed }
    }

    pub fn header_line(&self) -> String {
        format!("# riskmap {} config={} seed={}", self.version, self.config, self.seed)
    }

    /// CSV writer whose first line is the provenance comment.
    pub fn csv_to<W: Write>(&self, mut w: W) -> Result<csv::Writer<W>> {
        writeln!(w, "{}", self.header_line())?;
        Ok(csv::Writer::from_writer(w))
    }

    pub fn csv_writer(&self, path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
        self.csv_to(BufWriter::new(File::create(path)?))
    }
}

/// Two positive integers written `NX,NY`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize(pub [usize; 2]);

impl FromStr for GridSize {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or("expected NX,NY")?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
        let g = [parse(a)?, parse(b)?];
        if g.iter().any(|&v| v < 2) {
            return Err("each grid dimension needs at least 2 points".into());
        }
        Ok(GridSize(g))
    }
}

#[derive(Debug, Parser)]
#[command(name = "riskmap", version, about = "Spatial competing-risks survival models")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic study from the built-in design.
    Simulate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of subjects; overrides `simulation.n`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit a model and write a fit directory.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict surfaces at new locations from a fit directory.
    Krige {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Prediction grid size; overrides `kriging.grid`.
        #[arg(long)]
        grid: Option<GridSize>,
    },
    /// Cluster a kriged surface (`*_draws.csv`).
    Cluster {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of clusters; overrides `clustering.k`.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Convergence diagnostics for one fit, or two fits side by side.
    Diagnose {
        #[arg(long, required = true, num_args = 1, action = clap::ArgAction::Append)]
        draws: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// WAIC for one fit, or a comparison of two fits on the same data.
    Waic {
        #[arg(long, required = true, num_args = 1, action = clap::ArgAction::Append)]
        draws: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior summaries; `exp(name)` summarizes on the exponential scale.
    Summarize {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long, action = clap::ArgAction::Append)]
        quantity: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Csv(_) => 3,
        Error::Numerical(_) | Error::Diverged(_) | Error::Initialization(_) => 5,
        _ => 4,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = LoadedConfig::load(cli.config.as_deref())?;
    let seed = config.seed(cli.seed);
    commands::dispatch(&cli.command, &config, seed)
}

fn is_broken_pipe(e: &Error) -> bool {
    let io = match e {
        Error::Io(io) => Some(io),
        Error::Csv(c) => match c.kind() {
            csv::ErrorKind::Io(io) => Some(io),
            _ => None,
        },
        _ => None,
    };
    io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) if is_broken_pipe(&e) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
