//! Batch front end: reads a JSON run document, runs residual, identity and
//! convergence suites, and writes JSON or CSV reports.
//!
//! Exit codes: 0 when every check passes, 1 on a residual failure, 2 on
//! invalid input.

pub mod commands;
pub mod input;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use fibercurv::grid::FdConfig;
use fibercurv::FdOrder;

pub use input::{ChartSpec, OdeInput, RegionSpec, RunInput, TabulatedArray, TabulatedBundle};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) => EXIT_INVALID,
            Self::Failed(_) => EXIT_FAIL,
        }
    }
}

impl From<fibercurv::Error> for CliError {
    fn from(e: fibercurv::Error) -> Self {
        match e {
            fibercurv::Error::NonConvergence { .. } => Self::Failed(e.to_string()),
            other => Self::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fibercurv", version, about = "Curvature checks for torus-symmetric metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Einstein residual of every block, judged against a tolerance.
    Check(RunArgs),
    /// Sample a family and write it as a tabulated run document.
    Family(RunArgs),
    /// Solve for the semiflat conformal factor, or integrate the base ODE.
    Solve(RunArgs),
    /// CSV of block residual norms over successive refinements.
    Convergence(RunArgs),
    /// Structural identity suite as JSON.
    Identities(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_fd_order)]
    pub fd_order: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Number of grid levels, each halving the spacing of the previous one.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4))]
    pub levels: Option<u32>,
    /// Fixed tolerance, replacing the one estimated from refinement.
    #[arg(long)]
    pub tol: Option<f64>,
}

fn parse_fd_order(s: &str) -> Result<u32, String> {
    match s {
        "2" => Ok(2),
        "4" => Ok(4),
        _ => Err(format!("fd order must be 2 or 4, got {s}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Check,
    Family,
    Solve,
    Convergence,
    Identities,
}

/// A fully resolved run: command-line flags take precedence over the
/// values in the input document.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub command: CommandKind,
    pub input: RunInput,
    pub out: Option<PathBuf>,
    pub cfg: FdConfig,
    pub lambda: f64,
    pub tolerance: Option<f64>,
    pub levels: u32,
}

impl RunSpec {
    pub fn resolve(command: CommandKind, args: &RunArgs, input: RunInput) -> Result<Self, CliError> {
        let order = args.fd_order.or(input.fd_order).unwrap_or(4);
        let cfg = FdConfig::new(FdOrder::from_int(order)?);
        let lambda = args.lambda.or(input.lambda).unwrap_or(0.0);
        if !lambda.is_finite() {
            return Err(CliError::Invalid("lambda must be finite".into()));
        }
        let tolerance = args.tol.or(input.tolerance);
        if let Some(t) = tolerance {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Invalid(format!("tolerance must be positive, got {t}")));
            }
        }
        let refinable = input.family.is_some();
        let default_levels = match command {
            CommandKind::Convergence => 3,
            CommandKind::Family => 1,
            _ if refinable => 2,
            _ => 1,
        };
        let levels = args.levels.or(input.levels).unwrap_or(default_levels);
        if !(1..=4).contains(&levels) {
            return Err(CliError::Invalid(format!("levels must be in 1..=4, got {levels}")));
        }
        if levels > 1 && !refinable && command != CommandKind::Family {
            return Err(CliError::Invalid("only a `family` can be refined; use --levels 1".into()));
        }
        if command == CommandKind::Convergence && levels < 2 {
            return Err(CliError::Invalid("convergence needs at least 2 levels".into()));
        }
        let needs_tolerance = matches!(command, CommandKind::Check | CommandKind::Identities);
        if needs_tolerance && levels == 1 && tolerance.is_none() {
            return Err(CliError::Invalid(
                "a single level has no refinement estimate; give --tol".into(),
            ));
        }
        Ok(Self {
            command,
            input,
            out: args.out.clone(),
            cfg,
            lambda,
            tolerance,
            levels,
        })
    }
}

/// Rendered report and its verdict.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub body: String,
    pub passed: bool,
}

impl Command {
    pub fn parts(&self) -> (CommandKind, &RunArgs) {
        match self {
            Self::Check(a) => (CommandKind::Check, a),
            Self::Family(a) => (CommandKind::Family, a),
            Self::Solve(a) => (CommandKind::Solve, a),
            Self::Convergence(a) => (CommandKind::Convergence, a),
            Self::Identities(a) => (CommandKind::Identities, a),
        }
    }
}

/// Parses the input, runs the command and returns the rendered report.
pub fn execute(command: &Command) -> Result<RunOutput, CliError> {
    let (kind, args) = command.parts();
    let input = RunInput::from_path(&args.input)?;
    let spec = RunSpec::resolve(kind, args, input)?;
    commands::run(&spec)
}

fn write_output(path: Option<&Path>, body: &str) -> Result<(), CliError> {
    let res = match path {
        Some(p) => std::fs::write(p, body),
        None => std::io::stdout().lock().write_all(body.as_bytes()),
    };
    res.map_err(|e| CliError::Invalid(format!("cannot write output: {e}")))
}

/// Runs a parsed command line to completion and returns the exit code.
pub fn run_cli(cli: &Cli) -> i32 {
    let (_, args) = cli.command.parts();
    let result = execute(&cli.command).and_then(|out| {
        write_output(args.out.as_deref(), &out.body)?;
        Ok(out.passed)
    });
    match result {
        Ok(true) => EXIT_PASS,
        Ok(false) => {
            eprintln!("fibercurv: residual check failed");
            EXIT_FAIL
        }
        Err(e) => {
            eprintln!("fibercurv: {e}");
            e.exit_code()
        }
    }
}
