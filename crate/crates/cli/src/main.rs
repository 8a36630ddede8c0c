//! `perflab` command-line front end.
//!
//! Every run writes its machine output plus a `manifest.json` into `--out`.
//! `perflab replay --manifest PATH` reruns the recorded invocation and
//! reproduces the output files byte for byte.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Performative prediction lab: landscapes, solvers, condition checks and
/// stable-versus-optimal certificates.
#[derive(Debug, Parser)]
#[command(name = "perflab", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// Instance config (TOML).
    #[arg(long, global = true)]
    pub instance: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, env = "PERFLAB_SEED", default_value_t = 0, global = true)]
    pub seed: u64,
    /// Monte Carlo sample size per distribution.
    #[arg(long, default_value_t = 100_000, global = true)]
    pub samples: usize,
    /// Grid spacing for oracles and landscapes.
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    /// Output directory [default: perflab-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Use closed-form risks instead of Monte Carlo (Gaussian maps only).
    #[arg(long, global = true)]
    pub closed_form: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Rrm,
    Rgd,
    Pgd,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetArg {
    Dpr,
    Pr,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Cmd {
    /// PR and DPR(θ_PS, ·) over a grid.
    Landscape,
    /// Run a solver or the oracles.
    Solve {
        #[arg(long, value_enum)]
        method: SolveMethod,
        /// Starting point, comma separated [default: box center].
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta0: Option<Vec<f64>>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Check conditions, the implication chain or a theorem.
    ///
    /// SMOOTH, SC and LIPZ refer to the loss. WSC, RSI, PL and QG are checked
    /// on `--target` anchored at the performative optimum. SENS and MIXDOM
    /// refer to the distribution map.
    Verify {
        #[arg(long, value_delimiter = ',')]
        conditions: Vec<String>,
        /// Audit SC ⇒ WSC ⇒ RSI ⇒ PL ⇒ QG on `--target`.
        #[arg(long)]
        chain: bool,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        theorem: Option<u8>,
        #[arg(long, value_enum, default_value = "dpr")]
        target: TargetArg,
    },
    /// Optimality and distance certificates at the stable point.
    Certify,
    /// Rerun the invocation recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::dispatch(cli.common, cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
