use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wdmqkd::commands::{self, Output};
use wdmqkd::config::{load_config, ConfigError, RunConfig};
use wdmqkd_core::detection::ScanData;
use wdmqkd_core::fit::fit_scan;
use wdmqkd_core::{BiphotonPureState, SourceState};

#[derive(Parser)]
#[command(name = "wdmqkd", version, about = "Entangled photon-pair source simulator for WDM QKD")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fit period in degrees.
    #[arg(long, global = true, value_parser = ["180", "360"])]
    period: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic idler scans, maximizing angles, shifts and visibilities.
    TheoryScan {
        #[arg(long, default_value_t = 1.0)]
        f: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        alpha_deg: f64,
        /// Signal angles in degrees; the first is the shift reference.
        #[arg(long, value_delimiter = ',', default_value = "0,45,135", allow_negative_numbers = true)]
        theta_s: Vec<f64>,
        /// Use the separable product state instead of `(f, alpha)`.
        #[arg(long)]
        product: bool,
    },
    /// Simulate and fit polarizer scans for every configured channel.
    SimulateFit,
    /// Per-channel wavelengths, HV/VH rates and f estimates.
    Spectrum,
    /// BBM92 per channel and the WDM aggregate.
    Qkd,
    /// Analytic scans for the four reference operating points and the
    /// product state.
    ReproduceFigures,
    /// Fit an existing scan CSV and print the result as JSON.
    Fit { scan: PathBuf },
}

enum Failure {
    Config(ConfigError),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(p) = &cli.period {
        config.fit.period_deg = p.parse().expect("restricted by clap");
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = resolve(&cli).map_err(Failure::Config)?;

    if let Command::Fit { scan } = &cli.command {
        let text = std::fs::read_to_string(scan).with_context(|| format!("reading {}", scan.display()))?;
        let data = ScanData::parse_csv(&text).with_context(|| format!("parsing {}", scan.display()))?;
        let fit = fit_scan(&data, config.fit.period_deg).context("fitting scan")?;
        println!("{}", serde_json::to_string_pretty(&fit.report()).context("serializing fit")?);
        return Ok(());
    }

    let mut out = Output::new(&config.output_dir);
    out.write("resolved_config.toml", &config.to_toml())?;
    match &cli.command {
        Command::TheoryScan { f, alpha_deg, theta_s, product } => {
            let source = if *product {
                SourceState::Product
            } else {
                SourceState::Entangled(BiphotonPureState::from_degrees(*f, *alpha_deg).context("source state")?)
            };
            let summary = commands::theory_scan(&mut out, "theory_scan", &source, theta_s)?;
            for flag in &summary.flags {
                eprintln!("warning: {flag}");
            }
        }
        Command::SimulateFit => {
            commands::simulate_fit(&mut out, &config)?;
        }
        Command::Spectrum => {
            commands::spectrum(&mut out, &config)?;
        }
        Command::Qkd => {
            let summary = commands::qkd(&mut out, &config)?;
            for flag in &summary.flags {
                eprintln!("warning: {flag}");
            }
        }
        Command::ReproduceFigures => {
            commands::reproduce_figures(&mut out)?;
        }
        Command::Fit { .. } => unreachable!(),
    }
    println!("wrote {} files under {}", out.written().len(), config.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
