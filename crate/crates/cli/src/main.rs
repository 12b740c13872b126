use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ess_reform_cli::{
    exit, load_scenario, run_certify, run_oracle_check, run_sample_sets, run_solve, CliError, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "ess-reform",
    version,
    about = "Convex scheduling of lossy energy storage from scenario files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario and write solution.json and trace.csv
    Solve(Common),
    /// Check convexity of the reformulated cost and write certificate.json
    Certify(Common),
    /// Sample the power and energy sets of a two-period scenario on a grid
    SampleSets(WithResolution),
    /// Solve, brute-force on a grid, and compare objectives
    OracleCheck(WithResolution),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Random seed; overrides the scenario's solve.seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct WithResolution {
    #[command(flatten)]
    common: Common,
    /// Grid points per axis
    #[arg(long)]
    resolution: Option<usize>,
}

fn run(command: Command) -> Result<u8, CliError> {
    let (common, resolution, verb): (Common, Option<usize>, fn(_, _) -> _) = match command {
        Command::Solve(c) => (c, None, run_solve),
        Command::Certify(c) => (c, None, run_certify),
        Command::SampleSets(w) => (w.common, w.resolution, run_sample_sets),
        Command::OracleCheck(w) => (w.common, w.resolution, run_oracle_check),
    };
    let scenario = load_scenario(&common.scenario)?;
    let cfg = RunConfig {
        out: common.out,
        seed: common.seed,
        resolution,
    };
    verb(&scenario, &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::OK,
                _ => exit::USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
