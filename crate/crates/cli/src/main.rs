//! `lurye`: phase sweeps, Nyquist gains, cycle construction and verification
//! for discrete-time Lurye systems.
//!
//! Every subcommand prints a JSON run report on stdout (except
//! `phase-sweep --format csv`, which prints the table) and exits with
//! 0 ok, 2 invalid input, 3 no feasible pair, 4 phase condition failed,
//! 5 no shift intersection, 6 verification failed.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lurye_core::lurye_sim::{DEFAULT_K_MAX, DEFAULT_NYQUIST_TOL};
use lurye_core::{RationalFrequency, SlopeLimit};
use serde_json::json;

use commands::SweepOutput;
use report::{Failure, RunReport};

#[derive(Debug, Parser)]
#[command(name = "lurye", version, about = "Destabilizing nonlinearities for discrete-time Lurye systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureKind {
    /// Points of V_T.
    Vt,
    /// Points of G(e^{j omega}) V_T.
    Gvt,
    /// Breakpoints of the constructed nonlinearity.
    Phi,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smallest linear gain that destabilizes the loop.
    Nyquist {
        plant: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        kmax: f64,
        #[arg(long, default_value_t = DEFAULT_NYQUIST_TOL)]
        tol: f64,
    },
    /// Critical slopes over all coprime (alpha, beta) with beta <= beta-max.
    PhaseSweep {
        plant: PathBuf,
        #[arg(long, default_value_t = 20)]
        beta_max: u32,
        #[arg(long)]
        odd: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Builds a nonlinearity and a periodic cycle at one frequency.
    Construct {
        plant: PathBuf,
        #[arg(long)]
        alpha: u32,
        #[arg(long)]
        beta: u32,
        #[arg(long)]
        odd: bool,
        /// Slope bound, or "inf" for the monotone class.
        #[arg(long, default_value = "inf")]
        slope: SlopeLimit,
        #[arg(long, default_value = "phi.json")]
        out: PathBuf,
        #[arg(long, default_value = "sig.csv")]
        signals: PathBuf,
    },
    /// Checks a nonlinearity and signals against the plant by simulation.
    Verify {
        plant: PathBuf,
        phi: PathBuf,
        signals: PathBuf,
        #[arg(long, default_value_t = 20)]
        periods: usize,
        /// Writes the simulated trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Point sets and breakpoints for plotting.
    FigureData {
        plant: PathBuf,
        #[arg(long)]
        alpha: u32,
        #[arg(long)]
        beta: u32,
        #[arg(long, value_enum)]
        which: FigureKind,
        #[arg(long)]
        odd: bool,
        #[arg(long, default_value = "inf")]
        slope: SlopeLimit,
        #[arg(long)]
        out: PathBuf,
    },
}

fn frequency(alpha: u32, beta: u32) -> Result<RationalFrequency, Failure> {
    Ok(RationalFrequency::new(alpha, beta)?)
}

fn run(command: Command, report: &mut RunReport) -> Result<Option<Vec<u8>>, Failure> {
    let plant_path = match &command {
        Command::Nyquist { plant, .. }
        | Command::PhaseSweep { plant, .. }
        | Command::Construct { plant, .. }
        | Command::Verify { plant, .. }
        | Command::FigureData { plant, .. } => plant.clone(),
    };
    let (file, plant) = commands::load_plant(&plant_path)?;
    report.plant = Some(file);
    let results = match command {
        Command::Nyquist { kmax, tol, .. } => commands::nyquist(&plant, kmax, tol)?,
        Command::PhaseSweep { beta_max, odd, format, .. } => {
            match commands::phase_sweep(&plant, beta_max, odd, format == Format::Csv)? {
                SweepOutput::Json(v) => v,
                SweepOutput::Csv(bytes) => return Ok(Some(bytes)),
            }
        }
        Command::Construct { alpha, beta, odd, slope, out, signals, .. } => {
            commands::construct_cmd(&plant, frequency(alpha, beta)?, odd, slope, &out, &signals)?
        }
        Command::Verify { phi, signals, periods, trajectory, .. } => {
            commands::verify(&plant, &phi, &signals, periods, trajectory.as_deref())?
        }
        Command::FigureData { alpha, beta, which, odd, slope, out, .. } => {
            commands::figure_data(&plant, frequency(alpha, beta)?, which, odd, slope, &out)?
        }
    };
    report.results = results;
    Ok(None)
}

fn params(command: &Command) -> (&'static str, serde_json::Value) {
    match command {
        Command::Nyquist { plant, kmax, tol } => {
            ("nyquist", json!({ "plant_file": plant, "kmax": kmax, "tol": tol }))
        }
        Command::PhaseSweep { plant, beta_max, odd, format } => (
            "phase-sweep",
            json!({
                "plant_file": plant,
                "beta_max": beta_max,
                "odd": odd,
                "format": if *format == Format::Csv { "csv" } else { "json" },
            }),
        ),
        Command::Construct { plant, alpha, beta, odd, slope, out, signals } => (
            "construct",
            json!({
                "plant_file": plant, "alpha": alpha, "beta": beta, "odd": odd,
                "slope": slope, "out": out, "signals": signals,
            }),
        ),
        Command::Verify { plant, phi, signals, periods, trajectory } => (
            "verify",
            json!({
                "plant_file": plant, "phi": phi, "signals": signals,
                "periods": periods, "trajectory": trajectory,
            }),
        ),
        Command::FigureData { plant, alpha, beta, which, odd, slope, out } => (
            "figure-data",
            json!({
                "plant_file": plant, "alpha": alpha, "beta": beta, "which": which,
                "odd": odd, "slope": slope, "out": out,
            }),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, params) = params(&cli.command);
    let mut report = RunReport::new(name, params);
    match run(cli.command, &mut report) {
        Ok(Some(raw)) => {
            commands::write_stdout(&raw);
            return ExitCode::SUCCESS;
        }
        Ok(None) => {}
        Err(failure) => {
            eprintln!("lurye {name}: {}", failure.message);
            report.fail(failure);
        }
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    commands::write_stdout(text.as_bytes());
    ExitCode::from(report.exit_code as u8)
}
