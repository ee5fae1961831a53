mod batch;
mod commands;
mod config;
mod error;
mod plot;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cptkit::curvefit::LineModel;

use config::RunConfig;
use error::CliError;

/// Simulation and fitting of coherent population trapping spectra.
#[derive(Debug, Parser)]
#[command(name = "cptkit", version)]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write an SVG figure next to the main output.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a CPT spectrum from the `[simulate]` section.
    SimulateCpt {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit a population spectrum, then run the sensitivity scan and the dephasing bound.
    FitCpt {
        spectrum: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Reduce raw scans to a centred spectrum.
    ReduceScans {
        #[arg(required = true)]
        scans: Vec<PathBuf>,
        /// Wavemeter log (`timestamp_s,frequency_hz`).
        #[arg(long)]
        log: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Linear, cubic and anchored-cubic fits of linewidth vs temperature.
    ThermalModel {
        series: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Split a D-transition linewidth into its components.
    DBroadening {
        inputs: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit a line shape to an `x,y[,y_err]` CSV.
    FitLine {
        curve: PathBuf,
        /// lorentzian, double-lorentzian, gaussian, exponential, saturation, g2, linear, cubic, cubic-anchored
        #[arg(long)]
        model: LineModel,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Reduce and fit every dataset listed in a manifest.
    Batch {
        manifest: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let plot = cli.plot;
    match cli.command {
        Command::SimulateCpt { out } => commands::simulate_cpt(&config, &out, plot)?,
        Command::FitCpt { spectrum, out } => {
            commands::fit_cpt_file(&config, &spectrum, &out, plot)?;
        }
        Command::ReduceScans { scans, log, out } => {
            commands::reduce_files(&config, &scans, &log, &out, plot)?;
        }
        Command::ThermalModel { series, out } => {
            commands::thermal_model(&config, &series, &out, plot)?;
        }
        Command::DBroadening { inputs, out } => {
            commands::d_broadening(&config, &inputs, &out)?;
        }
        Command::FitLine { curve, model, out } => {
            commands::fit_line(&config, &curve, model, &out, plot)?;
        }
        Command::Batch { manifest, out, jobs } => return batch::run(&config, &manifest, &out, jobs, plot),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
