//! Batch experiment driver: every verification in the library exposed as
//! a subcommand with reproducible seeds and machine-readable reports
//! (JSON, schema `sphere-symm/1`; CSV for trajectories and sweeps).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigLayer, OutputSpec, ScenarioConfig};

pub const SCHEMA: &str = "sphere-symm/1";

const EXIT_OK: u8 = 0;
const EXIT_PRECONDITION: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "sphere-symm",
    version,
    about = "Spherical symmetrization experiments"
)]
struct Cli {
    /// TOML scenario file; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: logical cores; env SPHERE_SYMM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON report path (default: stdout).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// CSV path for trajectories and sweeps.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default, Clone)]
struct ScenarioArgs {
    /// Sphere dimension (1 or 2).
    #[arg(long)]
    d: Option<u8>,
    /// Measure of the first set.
    #[arg(long)]
    e1: Option<f64>,
    /// Measure of the second set.
    #[arg(long)]
    e2: Option<f64>,
    /// Inner-product threshold.
    #[arg(long)]
    a: Option<f64>,
    /// Azimuth cells (d = 2).
    #[arg(long)]
    n_phi: Option<usize>,
    /// Height cells (d = 2).
    #[arg(long)]
    n_t: Option<usize>,
    /// Cells on the circle (d = 1).
    #[arg(long)]
    n_cells: Option<usize>,
    /// Base seed for set generation and schedules.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            d: self.d,
            e1: self.e1,
            e2: self.e2,
            a: self.a,
            n_phi: self.n_phi,
            n_t: self.n_t,
            n_cells: self.n_cells,
            seed: self.seed,
            ..ConfigLayer::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Derived quantities of a triple: heights, radii, slopes, class.
    TripleInfo(ScenarioArgs),
    /// Kernel eigenvalues against the strict spectral bound.
    Spectrum {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Largest harmonic degree to report.
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Rearrangement upper bound over seeded random pairs.
    VerifyInequality {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Number of seeded pairs.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Polarization flow from random sets toward the cap pair.
    Polarize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Step budget.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Rearrangement-distance target.
        #[arg(long)]
        target: Option<f64>,
        /// Write the terminal sets as PREFIX.e1.set / PREFIX.e2.set.
        #[arg(long)]
        save_sets: Option<PathBuf>,
    },
    /// Distance of a pair to the orbit of its cap pair.
    Distance {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Load the first set from a bitset file instead of sampling.
        #[arg(long)]
        set1: Option<PathBuf>,
        /// Load the second set from a bitset file instead of sampling.
        #[arg(long)]
        set2: Option<PathBuf>,
    },
    /// Second-order expansion diagnostics along one harmonic family.
    Expand {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Harmonic degree of the family.
        #[arg(long)]
        degree: Option<u32>,
        /// Amplitudes (repeat the flag or comma-separate).
        #[arg(long, value_delimiter = ',')]
        s_values: Option<Vec<f64>>,
    },
    /// Deficit fit against the spectral prediction over an amplitude sweep.
    DeficitSweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Harmonic degree of the family (0 selects the rotation family).
        #[arg(long)]
        degree: Option<u32>,
        /// Amplitudes (repeat the flag or comma-separate).
        #[arg(long, value_delimiter = ',')]
        s_values: Option<Vec<f64>>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_PRECONDITION)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let file_layer = match &cli.config {
        Some(path) => ConfigLayer::from_file(path)?,
        None => ConfigLayer::default(),
    };

    let mut flag_layer = match &cli.command {
        Command::TripleInfo(s) => s.layer(),
        Command::Spectrum { scenario, n_max } => ConfigLayer {
            n_max: *n_max,
            ..scenario.layer()
        },
        Command::VerifyInequality { scenario, seeds } => ConfigLayer {
            seeds: *seeds,
            ..scenario.layer()
        },
        Command::Polarize {
            scenario,
            max_steps,
            target,
            ..
        } => ConfigLayer {
            max_steps: *max_steps,
            target: *target,
            ..scenario.layer()
        },
        Command::Distance { scenario, .. } => scenario.layer(),
        Command::Expand {
            scenario,
            degree,
            s_values,
        }
        | Command::DeficitSweep {
            scenario,
            degree,
            s_values,
        } => ConfigLayer {
            degree: *degree,
            s_values: s_values.clone(),
            ..scenario.layer()
        },
    };
    flag_layer.threads = cli.threads;

    let merged = file_layer.overlaid(flag_layer);
    let threads = merged.threads.or_else(|| {
        std::env::var("SPHERE_SYMM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }
    let config = ScenarioConfig::resolve(merged)?;
    let out = OutputSpec {
        json: cli.output,
        csv: cli.csv,
    };

    match cli.command {
        Command::TripleInfo(_) => commands::triple_info(&config, &out),
        Command::Spectrum { .. } => commands::spectrum(&config, &out),
        Command::VerifyInequality { .. } => commands::verify_inequality(&config, &out),
        Command::Polarize { save_sets, .. } => commands::polarize_flow(&config, &out, save_sets),
        Command::Distance { set1, set2, .. } => commands::distance(&config, &out, set1, set2),
        Command::Expand { .. } => commands::expand(&config, &out),
        Command::DeficitSweep { .. } => commands::deficit_sweep(&config, &out),
    }
}
