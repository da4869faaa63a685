//! `aggcausal` command-line front end.
//!
//! Exit codes: 0 pass, 1 usage or I/O error, 2 check failed, 3 synthesis
//! infeasible.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::Format;

pub type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    CheckFailed,
    Infeasible,
}

impl Status {
    fn code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 2,
            Status::Infeasible => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "aggcausal",
    version,
    about = "Exact laboratory for causal aggregation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,

    /// Output file (report, samples or synthesized object).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model JSON file.
    #[arg(long)]
    pub model: PathBuf,

    /// Aggregations JSON file; overrides the model's own `aggregations`.
    #[arg(long)]
    pub agg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Target {
    /// Macro variable intervened on (default: target of the realization, or
    /// the first aggregation).
    #[arg(long)]
    pub cause: Option<String>,

    /// Macro variable whose distribution is reported (default: the first
    /// other aggregation).
    #[arg(long)]
    pub effect: Option<String>,

    /// Single macro value.
    #[arg(long, conflicts_with = "grid", allow_hyphen_values = true)]
    pub xbar: Option<String>,

    /// Comma-separated macro values.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw ancestral samples of the micro model as CSV.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Compare P(effect | do(x̄)) under a realization with P(effect | x̄).
    Intervene {
        #[command(flatten)]
        model: ModelArgs,
        /// Realization JSON file (default: natural realization).
        #[arg(long)]
        realization: Option<PathBuf>,
        #[command(flatten)]
        target: Target,
    },
    /// Run a check; exit 2 when it detects a violation.
    Check {
        #[arg(value_enum)]
        kind: CheckKind,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        realization: Option<PathBuf>,
        #[command(flatten)]
        target: Target,
        /// Three macro variables `X,Y,Z` for chain and backdoor checks.
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<String>>,
        /// Adjustment set for a generalized backdoor check between
        /// `--cause` and `--effect`.
        #[arg(long, value_delimiter = ',')]
        adjust: Option<Vec<String>>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Synthesize an inhibiting realization, a discrete instance, the CDF
    /// noise or a coordinate change; exit 3 when infeasible.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        /// Model JSON file (not used by `discrete`).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        agg: Option<PathBuf>,
        #[command(flatten)]
        target: Target,
        /// Micro/macro cardinalities `|X|,|Z|,|Y|,|X̄|,|Ȳ|` for `discrete`.
        #[arg(long, value_delimiter = ',', default_value = "3,3,4,2,2")]
        cards: Vec<usize>,
        /// Where `discrete` writes the realization (the model goes to `--out`).
        #[arg(long)]
        realization_out: Option<PathBuf>,
        /// Micro weights for `coordinates` (default: total effects in the model).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alpha: Option<Vec<f64>>,
        /// Target macro coefficient for `coordinates`.
        #[arg(long, allow_hyphen_values = true)]
        c: Option<f64>,
        /// Samples per slice for the `cdf-noise` checks.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Quantile knots for empirical CDFs.
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
    /// Run a canned scenario end to end.
    Repro {
        /// shops | appendixA | promotion | thm2 | chain | backdoor | coordinates
        scenario: String,
        /// Parameter overrides `key=value`.
        overrides: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Confounding,
    Representability,
    Chain,
    Backdoor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Gaussian,
    Discrete,
    CdfNoise,
    Coordinates,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
