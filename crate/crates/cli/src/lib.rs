//! The `fareopt` command-line tool.
//!
//! Every command is deterministic given `--seed`. Report files carry the
//! seed, the SHA-256 of the input files and the tool version.

mod commands;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use output::{Provenance, TOOL_VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or invalid input file, unwritable output.
    #[error("{0}")]
    Config(String),
    /// A solver or sampler failed.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    Pre,
    Post,
}

#[derive(Debug, Parser)]
#[command(name = "fareopt", version, about = "Taxi fare optimization under learned travel preferences")]
pub struct Cli {
    /// Worker threads for parallel starts and query scoring [default: all cores].
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a network config and print it with defaults filled in.
    Validate(ValidateArgs),
    /// Solve the flow equilibrium for a fixed fare vector.
    Equilibrium(EquilibriumArgs),
    /// Optimize taxi fares for one risk weight.
    Optimize(OptimizeArgs),
    /// Optimize fares across a grid of risk weights.
    Sweep(SweepArgs),
    /// Run the risk-weight sweep on the shipped case study for both conditions.
    CaseStudy(CaseStudyArgs),
    /// Compare active and random querying on synthetic users.
    BenchLearning(BenchArgs),
    /// Write a synthetic population file.
    SynthPopulation(SynthArgs),
    /// Run the survey service until interrupted.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config (JSON); built-in defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's port.
    #[arg(long)]
    pub port: Option<u16>,
    /// Overrides the config's host.
    #[arg(long)]
    pub host: Option<String>,
    /// Directory for event logs and snapshots; overrides the config.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Network config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Population file (JSON); repeat to merge several.
    #[arg(long, required = true)]
    pub population: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub starts: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound of every taxi fare.
    #[arg(long, default_value_t = 50.0)]
    pub fare_max: f64,
    /// Damping of the equilibrium iteration.
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Also validate these population files.
    #[arg(long)]
    pub population: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated taxi fares, one per road.
    #[arg(long, value_delimiter = ',', required = true)]
    pub fares: Vec<f64>,
    /// Risk weight used for the reported objective.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated risk weights.
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub gamma_grid: Vec<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CaseStudyArgs {
    /// Directory holding casestudy.json and population_{pre,post}.json.
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub gamma_grid: Vec<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Directory for sweep_pre.csv and sweep_post.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 50)]
    pub users: usize,
    #[arg(long, default_value_t = 10)]
    pub active: usize,
    #[arg(long, default_value_t = 6)]
    pub holdout: usize,
    /// Independent repetitions; two or more give a paired t-test.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicates: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Candidate queries scored per active step.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub pool_size: u64,
    /// Divisor applied to the default attribute scales.
    #[arg(long, default_value_t = fareopt_core::bench::BENCH_SCALE_FACTOR)]
    pub scale_factor: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub condition: ConditionArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, S>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.render().to_string().trim_end().to_string()));
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let job = move || commands::dispatch(cli.command);
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(job),
        None => job(),
    }
}
