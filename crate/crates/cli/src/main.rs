use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Joint interventional effect estimation under hidden confounding.
#[derive(Debug, Parser)]
#[command(name = "jointfx", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Root seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// JSON config: fit settings for `fit`, experiment settings for `experiment`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    /// Two treatments: X1 -> X2, both -> Y.
    K2,
    /// Three treatments, fully connected forward.
    K3,
    /// Random 10-node network with 9 treatments.
    Network,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Anm,
    Reg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a ground-truth SCM and its regime datasets.
    Simulate {
        #[arg(long, value_enum, default_value = "k3")]
        model: Model,
        /// Rows per regime.
        #[arg(long, default_value_t = 1600)]
        n: usize,
        /// Bound on noise correlations.
        #[arg(long, default_value_t = 0.65)]
        c: f64,
    },
    /// Fit a model to regime data.
    Fit {
        /// Regime CSV.
        #[arg(long)]
        data: PathBuf,
        /// Graph JSON (an SCM JSON document also works).
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "anm")]
        method: Method,
    },
    /// Predict joint interventional effects from a fitted model.
    Predict {
        /// Fitted model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// CSV of intervention points with one column per treatment.
        #[arg(long)]
        points: PathBuf,
    },
    /// Constructive two-treatment identification.
    Identify2 {
        /// One regime CSV holding obs, do:X1 and do:X2 rows, or three CSVs.
        #[arg(long, required = true, num_args = 1..=3)]
        data: Vec<PathBuf>,
        /// Points per axis of the emitted surface grid.
        #[arg(long, default_value_t = 21)]
        grid: usize,
    },
    /// Exact tables of the binary unidentifiability example.
    Counterexample {
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Print CSV instead of aligned tables.
        #[arg(long)]
        csv: bool,
    },
    /// Run an experiment and write its CSV files plus a manifest.
    Experiment {
        #[arg(value_parser = parse_kind)]
        kind: jointfx_core::harness::ExperimentKind,
        /// Re-run and compare against the files already in the output directory.
        #[arg(long)]
        verify: bool,
    },
}

fn parse_kind(s: &str) -> Result<jointfx_core::harness::ExperimentKind, String> {
    s.parse().map_err(|e: jointfx_core::Error| e.to_string())
}

/// Why a command failed, mapped onto the exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<jointfx_core::Error> for Failure {
    fn from(e: jointfx_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn out_dir(global: &Global, default: &str) -> PathBuf {
    global.out.clone().unwrap_or_else(|| Path::new(default).to_path_buf())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
