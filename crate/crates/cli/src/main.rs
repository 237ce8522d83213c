//! `dtgnss`: generate scenes and constellations, build correction
//! databases, simulate receivers and evaluate corrected fixes.
//!
//! Exit status is 0 on success, 1 for invalid input or arguments and 2 for
//! runtime failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dtgnss", version, about = "Digital-twin GNSS correction databases")]
pub struct Cli {
    /// Seed for the measurement noise stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML file with default parameters for every command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that receives all written files.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scene (open_sky, canyon or street) to scene.json.
    GenScene(GenSceneArgs),
    /// Write a synthetic satellite table to ephemeris.csv.
    GenConstellation(GenConstellationArgs),
    /// Build the correction database (correction.db, support.csv).
    BuildDb(BuildDbArgs),
    /// Simulate receiver measurements along a track (measurements.csv).
    SimulateRx(SimulateRxArgs),
    /// Solve logged measurements and apply the database (report.csv).
    Correct(CorrectArgs),
    /// Run the full pipeline, or summarize an existing report.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub street_width: Option<f64>,
    #[arg(long)]
    pub building_height: Option<f64>,
    #[arg(long)]
    pub block_length: Option<f64>,
    #[arg(long)]
    pub building_depth: Option<f64>,
    #[arg(long)]
    pub blocks_per_row: Option<u32>,
    /// Grid cell size (m).
    #[arg(long)]
    pub resolution: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenConstellationArgs {
    /// Scene whose origin the satellites must stay visible from.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<u32>,
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Seconds between tabulated epochs.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub start: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BuildDbArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub ephemeris: PathBuf,
    /// Epoch sampling step inside each slot (s).
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub slot_length: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateRxArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub ephemeris: PathBuf,
    /// Truth track (`epoch_s,east_m,north_m,up_m`).
    #[arg(long, conflicts_with_all = ["start", "end"])]
    pub track: Option<PathBuf>,
    /// Start of a straight track as `east,north`; the track is sampled at
    /// every ephemeris epoch and written to track.csv.
    #[arg(long, allow_hyphen_values = true, value_parser = commands::parse_pair)]
    pub start: Option<[f64; 2]>,
    #[arg(long, allow_hyphen_values = true, value_parser = commands::parse_pair)]
    pub end: Option<[f64; 2]>,
    /// Standard deviation of Gaussian pseudorange noise (m); 0 disables it.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub ephemeris: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub measurements: PathBuf,
    /// Truth track; adds error columns to the report.
    #[arg(long)]
    pub track: Option<PathBuf>,
    /// Baseline solver: wls or ols.
    #[arg(long)]
    pub solver: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Summarize an existing report instead of running the pipeline.
    #[arg(long, conflicts_with_all = ["scene", "ephemeris", "track", "db"])]
    pub report: Option<PathBuf>,
    #[arg(long, required_unless_present = "report")]
    pub scene: Option<PathBuf>,
    #[arg(long, required_unless_present = "report")]
    pub ephemeris: Option<PathBuf>,
    #[arg(long, required_unless_present = "report")]
    pub track: Option<PathBuf>,
    /// Existing database; built from the scene and ephemeris when omitted.
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long)]
    pub solver: Option<String>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
