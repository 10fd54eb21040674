//! `expint`: benchmarks, combustion solves, sparse propagation and verification.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime or numerical error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, Params};

#[derive(Parser)]
#[command(name = "expint", version, about = "Matrix-free exponential integrators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time stencil and sparse kernels and report throughput.
    Bench(BenchArgs),
    /// Integrate the combustion model u' = Δu + g(u) with exponential Euler.
    SolveCombustion(SolveArgs),
    /// Propagate a vector by exp(-tA) or exp(-itH) for a Matrix Market matrix.
    Propagate(PropagateArgs),
    /// Run the built-in oracle and convergence checks.
    Verify(VerifyArgs),
}

/// Flags shared by every command. A command rejects the ones it does not use.
#[derive(Args, Default)]
struct Common {
    /// `key = value` file; flags override its entries.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// N for a cube or NX,NY,NZ.
    #[arg(long)]
    grid: Option<String>,
    /// f32, f64 or c64 (bench accepts a comma-separated list).
    #[arg(long)]
    precision: Option<String>,
    /// Worker count for slab or row-block decomposition.
    #[arg(long)]
    workers: Option<String>,
    /// Relative tolerance of the matrix function expansions.
    #[arg(long)]
    tol: Option<String>,
    /// Time step.
    #[arg(long)]
    h: Option<String>,
    /// Final time.
    #[arg(long = "t-end")]
    t_end: Option<String>,
    /// none, homogeneous, or a Dirichlet function such as "z*(1-z)*x*y".
    #[arg(long, allow_hyphen_values = true)]
    boundary: Option<String>,
    /// naive or tiled (bench accepts a comma-separated list).
    #[arg(long)]
    method: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
    /// Emit JSON instead of CSV or text.
    #[arg(long)]
    json: bool,
}

impl Common {
    fn params(&self, allowed: &[&str]) -> Result<Params, ConfigError> {
        let mut p = match &self.config {
            Some(path) => Params::from_file(path, allowed)?,
            None => Params::default(),
        };
        let flags = [
            ("grid", &self.grid),
            ("precision", &self.precision),
            ("workers", &self.workers),
            ("tol", &self.tol),
            ("h", &self.h),
            ("t-end", &self.t_end),
            ("boundary", &self.boundary),
            ("method", &self.method),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if value.is_some() && !allowed.contains(&key) {
                return Err(ConfigError(format!("--{key} is not used by this command")));
            }
            p.set(key, value.clone());
        }
        p.set_flag("json", self.json);
        Ok(p)
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// fused, fused-coeff, split, combustion-g, csr-fused or copy; comma-separated.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    repetitions: Option<String>,
    #[arg(long)]
    warmup: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Initial condition as an expression in x, y, z.
    #[arg(long, allow_hyphen_values = true)]
    init: Option<String>,
    /// Per-step CSV (step, t, matvecs, max_norm).
    #[arg(long, value_name = "PATH")]
    steps_csv: Option<String>,
    /// Largest Newton polynomial degree before the step is halved.
    #[arg(long)]
    max_degree: Option<String>,
}

#[derive(Args)]
struct PropagateArgs {
    #[command(flatten)]
    common: Common,
    /// Matrix Market file.
    #[arg(long, value_name = "PATH")]
    matrix: Option<String>,
    /// Initial vector, one `re [im]` entry per line.
    #[arg(long, value_name = "PATH")]
    initial: Option<String>,
    /// Treat the matrix as a Hamiltonian H and apply exp(-itH).
    #[arg(long)]
    hermitian: bool,
    /// Transfer ledger CSV when running on several workers.
    #[arg(long, value_name = "PATH")]
    ledger: Option<String>,
    /// Largest Newton polynomial degree before the step is halved.
    #[arg(long)]
    max_degree: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated subset of stencil, leja, partition, order.
    #[arg(long)]
    only: Option<String>,
    #[arg(long, hide = true)]
    inject_failure: bool,
}

pub enum Failure {
    Config(ConfigError),
    Runtime(expint::Error),
    /// Verification ran but this many checks failed.
    Checks(usize),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<expint::Error> for Failure {
    fn from(e: expint::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Bench(a) => {
            let mut p = a.common.params(commands::BENCH_KEYS)?;
            p.set("kernel", a.kernel);
            p.set("repetitions", a.repetitions);
            p.set("warmup", a.warmup);
            p.set("seed", a.seed);
            commands::bench(&p)
        }
        Command::SolveCombustion(a) => {
            let mut p = a.common.params(commands::SOLVE_KEYS)?;
            p.set("init", a.init);
            p.set("steps-csv", a.steps_csv);
            p.set("max-degree", a.max_degree);
            commands::solve_combustion(&p)
        }
        Command::Propagate(a) => {
            let mut p = a.common.params(commands::PROPAGATE_KEYS)?;
            p.set("matrix", a.matrix);
            p.set("initial", a.initial);
            p.set_flag("hermitian", a.hermitian);
            p.set("ledger", a.ledger);
            p.set("max-degree", a.max_degree);
            commands::propagate(&p)
        }
        Command::Verify(a) => {
            let mut p = a.common.params(commands::VERIFY_KEYS)?;
            p.set("only", a.only);
            p.set_flag("inject-failure", a.inject_failure);
            commands::verify(&p)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Checks(n)) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(2)
        }
    }
}
