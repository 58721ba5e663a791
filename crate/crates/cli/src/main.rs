//! `cpwloss`: loss budgets, participation simulations and resonator fits.

mod config;
mod fitting;
mod report;
mod simulate;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, Format, CONFIG_ENV};
use report::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cpwloss", version, about = "CPW resonator loss toolkit", propagate_version = true)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, help_heading = "Global options", env = CONFIG_ENV, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output format of the report.
    #[arg(long, global = true, help_heading = "Global options", value_enum)]
    format: Option<Format>,
    /// Write the report (or synthetic data) to this file instead of stdout.
    #[arg(short, long, global = true, help_heading = "Global options", value_name = "PATH")]
    output: Option<PathBuf>,
    /// Worker threads for batch work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print progress and timing to stderr; repeat for more.
    #[arg(short, long, global = true, help_heading = "Global options", action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the field of a stack and report its participation and loss budget.
    Simulate(simulate::SimulateArgs),
    /// Combine participation ratios with loss tangents.
    Budget(simulate::BudgetArgs),
    /// Fit notch-port S21 traces.
    #[command(name = "fit-s21")]
    FitS21(fitting::FitS21Args),
    /// Fit the TLS power dependence of internal quality factor sweeps.
    #[command(name = "fit-tls")]
    FitTls(fitting::FitTlsArgs),
    /// Aggregate TLS fit records into chip summaries.
    Stats(summary::StatsArgs),
    /// Generate synthetic S21 traces or photon-number sweeps.
    Synth(fitting::SynthArgs),
    /// Simulate all six presets and compare with the tabulated budgets.
    #[command(name = "reproduce-tables")]
    ReproduceTables(simulate::TablesArgs),
}

/// Settings shared by every subcommand after merging file and flags.
#[derive(Debug)]
pub struct Context {
    pub file: FileConfig,
    pub config_path: Option<PathBuf>,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub verbose: u8,
}

impl Context {
    pub fn log(&self, level: u8, message: impl FnOnce() -> String) {
        if self.verbose >= level {
            eprintln!("{}", message());
        }
    }
}

#[derive(Debug, Args)]
pub struct LevelArg {
    /// Mesh refinement level (1 = coarse; each level roughly doubles the cells).
    #[arg(long)]
    pub level: Option<u32>,
}

pub const DEFAULT_LEVEL: u32 = 3;

impl LevelArg {
    pub fn resolve(&self, file: &FileConfig) -> CliResult<u32> {
        let level = self.level.or(file.level).unwrap_or(DEFAULT_LEVEL);
        if level == 0 || level > 8 {
            return Err(CliError::Input(format!("refinement level must be in 1..=8, got {level}")));
        }
        Ok(level)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let (file, config_path) = FileConfig::resolve(cli.config.as_deref())?;
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let ctx = Context {
        format: cli.format.or(file.format).unwrap_or_default(),
        output: cli.output,
        verbose: cli.verbose,
        file,
        config_path,
    };
    match cli.command {
        Command::Simulate(args) => simulate::simulate(&ctx, &args),
        Command::Budget(args) => simulate::budget(&ctx, &args),
        Command::FitS21(args) => fitting::fit_s21(&ctx, &args),
        Command::FitTls(args) => fitting::fit_tls(&ctx, &args),
        Command::Stats(args) => summary::stats(&ctx, &args),
        Command::Synth(args) => fitting::synth(&ctx, &args),
        Command::ReproduceTables(args) => simulate::reproduce_tables(&ctx, &args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
