//! Experiment runner for the mcvd toolkit.

mod commands;
mod scenario;

use clap::{Parser, Subcommand};
use commands::SimulateMode;
use scenario::{ExperimentSpec, ProvenanceArg, Scale, ScenarioFile};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "mcvd",
    version,
    about = "Diffusion-channel simulation, model verification, and achievable-rate analysis"
)]
struct Cli {
    /// Scenario file (TOML); defaults cover the standard deployment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Sampling scale preset.
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Channel coefficient source.
    #[arg(long, global = true, value_enum, default_value_t = ProvenanceArg::MonteCarlo)]
    provenance: ProvenanceArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate or derive channel delay coefficients per distance.
    Coeffs,
    /// Run the particle-tracking simulator and dump raw arrivals.
    Simulate {
        /// Whole random transmission or a single impulse release.
        #[arg(long, value_enum, default_value_t = SimulateMode::Sequence)]
        mode: SimulateMode,
    },
    /// Chi-square model verification over the scenario grid.
    Verify,
    /// Mutual-information surfaces and achievable rates.
    Rate,
    /// Coefficients, verification, and rates in one run.
    Sweep,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => ScenarioFile::load(path)?,
        None => ScenarioFile::default(),
    };
    let spec = ExperimentSpec::resolve(&file, cli.scale, cli.seed)?;
    match cli.command {
        Command::Coeffs => commands::cmd_coeffs(&spec, &cli.out, cli.provenance),
        Command::Simulate { mode } => commands::cmd_simulate(&spec, &cli.out, mode),
        Command::Verify => commands::cmd_verify(&spec, &cli.out, cli.provenance),
        Command::Rate => commands::cmd_rate(&spec, &cli.out, cli.provenance),
        Command::Sweep => commands::cmd_sweep(&spec, &cli.out, cli.provenance),
    }
}
