//! Subcommand implementations. Each returns the `results` payload of the
//! report or a [`Failure`] carrying the exit code.

use std::fs;
use std::io::Write;
use std::path::Path;

use lurye_core::construct::periodic_data;
use lurye_core::interp::{lemma2_check, odd_append};
use lurye_core::io::{
    read_nonlinearity, read_signals_file, write_nonlinearity, write_signals_file, write_slope_bounds,
    write_table, write_trajectory,
};
use lurye_core::lurye_sim::{cycle_trajectory, nyquist_gain};
use lurye_core::phase_cert::sweep;
use lurye_core::{
    construct, verify_cycle, Complex64, DataPairSet, FrequencyResponse, Plant, PlantFile,
    RationalFrequency, SlopeLimit,
};
use serde_json::{json, Value};

use crate::report::{to_value, Failure, EXIT_NO_FEASIBLE_PAIR, EXIT_VERIFY_FAILED};
use crate::FigureKind;

/// Verification tolerance for `verify`.
pub const VERIFY_TOL: f64 = 1e-6;

pub fn load_plant(path: &Path) -> Result<(PlantFile, Plant), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let file: PlantFile = serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("{}: invalid plant JSON: {e}", path.display())))?;
    let plant = file.clone().into_plant()?;
    Ok((file, plant))
}

fn create(path: &Path) -> Result<fs::File, Failure> {
    fs::File::create(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn nyquist(plant: &Plant, k_max: f64, tol: f64) -> Result<Value, Failure> {
    let g = plant
        .as_transfer_function()
        .ok_or_else(|| Failure::input("the Nyquist gain needs a rational plant"))?;
    let result = nyquist_gain(g, k_max, tol).map_err(Failure::input)?;
    Ok(json!({
        "nyquist": result,
        "k_n": result.k_n,
        "no_crossing_le_kmax": !result.crossed,
    }))
}

pub enum SweepOutput {
    Json(Value),
    Csv(Vec<u8>),
}

pub fn phase_sweep(plant: &Plant, beta_max: u32, odd: bool, csv: bool) -> Result<SweepOutput, Failure> {
    let rows = sweep(plant, beta_max, odd).map_err(Failure::input)?;
    let feasible = rows.iter().filter(|r| r.kbar.is_feasible()).count();
    let out = if csv {
        let mut buf = Vec::new();
        write_slope_bounds(&mut buf, &rows)?;
        SweepOutput::Csv(buf)
    } else {
        SweepOutput::Json(json!({ "feasible": feasible, "rows": rows }))
    };
    if feasible == 0 {
        let failure = Failure::new(
            EXIT_NO_FEASIBLE_PAIR,
            format!("no feasible (alpha, beta) with beta <= {beta_max}"),
        );
        return Err(match out {
            SweepOutput::Json(v) => failure.with_results(v),
            SweepOutput::Csv(_) => failure,
        });
    }
    Ok(out)
}

pub fn construct_cmd(
    plant: &Plant,
    freq: RationalFrequency,
    odd: bool,
    slope: SlopeLimit,
    phi_out: &Path,
    signals_out: &Path,
) -> Result<Value, Failure> {
    let cert = construct(plant, freq, odd, slope)?;
    write_nonlinearity(phi_out, &cert.phi)?;
    write_signals_file(signals_out, &cert.u, &cert.y)?;
    Ok(json!({
        "certificate": cert,
        "phi_file": phi_out.display().to_string(),
        "signals_file": signals_out.display().to_string(),
    }))
}

pub fn verify(
    plant: &Plant,
    phi_path: &Path,
    signals_path: &Path,
    periods: usize,
    trajectory: Option<&Path>,
) -> Result<Value, Failure> {
    let phi = read_nonlinearity(phi_path)?;
    let (u, y) = read_signals_file(signals_path)?;
    let verdict = verify_cycle(plant, &phi, &u, &y, periods).map_err(Failure::input)?;
    let passed = verdict.passes(VERIFY_TOL);
    let mut results = json!({ "verdict": verdict, "passed": passed, "tolerance": VERIFY_TOL });
    if let Some(path) = trajectory {
        match cycle_trajectory(plant, &phi, &u, periods) {
            Ok(traj) => {
                write_trajectory(create(path)?, &traj.y, &traj.u)?;
                results["trajectory_file"] = json!(path.display().to_string());
            }
            Err(e) => results["trajectory_error"] = json!(e.to_string()),
        }
    }
    if !passed {
        return Err(Failure::new(
            EXIT_VERIFY_FAILED,
            format!(
                "cycle not verified: nontrivial={}, max residual {:e}",
                verdict.nontrivial,
                verdict.max_residual()
            ),
        )
        .with_results(results));
    }
    Ok(results)
}

pub fn figure_data(
    plant: &Plant,
    freq: RationalFrequency,
    which: FigureKind,
    odd: bool,
    slope: SlopeLimit,
    out: &Path,
) -> Result<Value, Failure> {
    let points = |zs: Vec<Complex64>| -> Result<Value, Failure> {
        let rows: Vec<Vec<f64>> = zs.iter().map(|z| vec![z.re, z.im]).collect();
        write_table(create(out)?, &["re", "im"], &rows)?;
        Ok(json!({ "count": rows.len(), "points": rows }))
    };
    match which {
        FigureKind::Vt => points(freq.phasor()),
        FigureKind::Gvt => {
            let g = plant.response_at(freq.omega())?;
            points(freq.phasor().into_iter().map(|v| g * v).collect())
        }
        FigureKind::Phi => {
            let transformed = match slope {
                SlopeLimit::Finite(k) => plant.plus_constant(1.0 / k),
                SlopeLimit::Infinite => plant.clone(),
            };
            let (u, y) = periodic_data(&transformed, &freq)?;
            let mut data = DataPairSet::from_signals(&y, &u);
            if odd && freq.alpha_is_even() {
                data = odd_append(&data);
            }
            let monotone = lemma2_check(&data);
            let cert = construct(plant, freq, odd, slope).map_err(|e| {
                Failure::from(e).with_results(json!({ "lemma2_check": monotone }))
            })?;
            let rows: Vec<Vec<f64>> = cert
                .phi
                .breakpoints()
                .iter()
                .map(|b| vec![b.y, b.v_lo, b.v_hi])
                .collect();
            write_table(create(out)?, &["y", "v_lo", "v_hi"], &rows)?;
            let stair_step = cert.phi.breakpoints().iter().any(|b| b.v_hi > b.v_lo);
            Ok(json!({
                "lemma2_check": monotone,
                "count": rows.len(),
                "stair_step": stair_step,
                "phi": to_value(&cert.phi),
            }))
        }
    }
}

pub fn write_stdout(bytes: &[u8]) {
    let mut out = std::io::stdout().lock();
    // a closed pipe is not worth a panic
    let _ = out.write_all(bytes).and_then(|_| out.flush());
}
