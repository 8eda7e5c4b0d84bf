//! `mdfn` command line: argument parsing, configuration merging and result bundles.

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdfn_core::config::StudyKind;
use mdfn_core::{Direction, Error};

pub const OUT_DIR_ENV: &str = "MDFN_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "mdfn-out";

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Io = 1,
    Usage = 2,
    Config = 3,
    Solver = 4,
    Infeasible = 5,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn of(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Constraint { .. } | Error::Domain { .. } => Status::Config,
            Error::Equalization(_) | Error::Infeasible(_) => Status::Infeasible,
            Error::Io(_) => Status::Io,
            _ if e.is_solver_failure() => Status::Solver,
            _ => Status::Solver,
        }
    }

    /// Category name written next to failures in summaries.
    pub fn category(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Io => "io",
            Status::Usage => "usage",
            Status::Config => "config",
            Status::Solver => "solver",
            Status::Infeasible => "infeasible",
        }
    }

    /// The more severe of two outcomes; solver failures outrank infeasibility.
    pub fn worst(self, other: Status) -> Status {
        let rank = |s: Status| match s {
            Status::Ok => 0,
            Status::Infeasible => 1,
            Status::Solver => 2,
            Status::Config => 3,
            Status::Usage => 4,
            Status::Io => 5,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

impl Failure {
    pub fn new(status: Status, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::new(Status::of(&e), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(Status::Io, e.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.status.category(), self.message)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mdfn",
    version,
    about = "Multilayer porous-electrode half-cell simulator"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Named design; replaces the configuration's design section.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// C-rate of the run or study.
    #[arg(long = "c-rate", global = true, value_name = "RATE")]
    pub c_rate: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Output directory [default: $MDFN_OUT_DIR, else ./mdfn-out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Field snapshots per constant-current step.
    #[arg(long = "snapshot-count", global = true, value_name = "N")]
    pub snapshot_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Charge,
    Discharge,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Charge => Direction::Charge,
            DirectionArg::Discharge => Direction::Discharge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Sensitivity,
    Thickness,
    Ratio,
    Mass,
    CrateCurve,
}

impl From<SweepKind> for StudyKind {
    fn from(k: SweepKind) -> Self {
        match k {
            SweepKind::Sensitivity => StudyKind::Sensitivity,
            SweepKind::Thickness => StudyKind::Thickness,
            SweepKind::Ratio => StudyKind::Ratio,
            SweepKind::Mass => StudyKind::Mass,
            SweepKind::CrateCurve => StudyKind::CrateCurve,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one design through a protocol (a single constant-current step by default).
    Simulate,
    /// Parameter, thickness, ratio, mass or rate sweep.
    Sweep {
        /// Sweep to run when the configuration has no study section.
        #[arg(long, value_enum)]
        kind: Option<SweepKind>,
    },
    /// Staged design search.
    Optimize {
        #[arg(long = "max-evaluations", value_name = "N")]
        max_evaluations: Option<usize>,
    },
    /// Equalize a design set to a shared specific capacity and compare at one C-rate.
    Benchmark {
        /// Comma-separated preset names.
        #[arg(long, value_delimiter = ',', value_name = "NAMES")]
        designs: Vec<String>,
        /// Shared specific capacity (mAh/cm^2); the first design's own by default.
        #[arg(long, value_name = "MAH_CM2")]
        target: Option<f64>,
    },
    /// Repeated charge/discharge protocol.
    Cycle {
        /// Named cycling protocol.
        #[arg(long, value_name = "NAME", default_value = "3c-x4")]
        protocol: String,
    },
    /// Validate a configuration and print it with defaults filled in.
    Check,
    /// List the built-in design and protocol presets.
    Presets,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                Status::Usage.code()
            } else {
                0
            });
        }
    };
    match execute(&cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(f) => {
            eprintln!("mdfn: {f}");
            ExitCode::from(f.status.code())
        }
    }
}

/// Runs a parsed command. `Ok` carries the status of partially failed studies.
pub fn execute(cli: &Cli) -> Result<Status, Failure> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Failure::new(Status::Usage, "--threads must be at least 1"));
        }
        // Fails only if a pool already exists, in which case that pool is used.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    commands::dispatch(cli)
}
