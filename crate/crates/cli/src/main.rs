use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qrs_cli::{cmd_compare, cmd_run, CompareArgs, RunArgs};
use qrs_core::netsim::Mode;

#[derive(Parser)]
#[command(name = "qrs", version, about = "Simulate QoS path-failure recovery for reserved flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Proposed,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv and summary.txt.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (QRS_OUT takes precedence).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write the event trace to trace.bin.
        #[arg(long)]
        trace: bool,
    },
    /// Run a scenario in both modes and write compare.csv.
    Compare {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            mode,
            seed,
            out,
            trace,
        } => cmd_run(&RunArgs {
            scenario,
            mode: mode.map(|m| match m {
                ModeArg::Baseline => Mode::Baseline,
                ModeArg::Proposed => Mode::Proposed,
            }),
            seed,
            out,
            trace,
        })
        .map(|r| print!("{}", r.summary())),
        Command::Compare { scenario, seed, out } => {
            cmd_compare(&CompareArgs { scenario, seed, out }).map(|c| print!("{}", c.summary()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qrs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
