//! File formats: plant JSON, nonlinearity JSON, signal and trajectory CSV.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::interp::PiecewiseNonlinearity;
use crate::lti::{LtiError, PeriodicSignal};
use crate::phase_cert::{CriticalSlope, SlopeBound};
use crate::plant::{Plant, PlantFile};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid signals file: {0}")]
    Signals(String),
    #[error(transparent)]
    Plant(#[from] LtiError),
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn write_string(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Parses either plant form and validates it.
pub fn parse_plant(text: &str) -> Result<Plant, IoError> {
    let file: PlantFile = serde_json::from_str(text)?;
    Ok(file.into_plant()?)
}

pub fn read_plant(path: &Path) -> Result<Plant, IoError> {
    parse_plant(&read_to_string(path)?)
}

pub fn read_nonlinearity(path: &Path) -> Result<PiecewiseNonlinearity, IoError> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

pub fn write_nonlinearity(path: &Path, phi: &PiecewiseNonlinearity) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(phi)?;
    text.push('\n');
    write_string(path, &text)
}

/// `index,u,y` with shortest round-trip numbers.
pub fn write_signals<W: Write>(
    out: W,
    u: &PeriodicSignal,
    y: &PeriodicSignal,
) -> Result<(), IoError> {
    if u.period() != y.period() {
        return Err(IoError::Signals(format!(
            "u has {} samples, y has {}",
            u.period(),
            y.period()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "u", "y"])?;
    for (i, (a, b)) in u.values().iter().zip(y.values()).enumerate() {
        w.write_record([i.to_string(), format!("{a:?}"), format!("{b:?}")])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_signals<R: Read>(input: R) -> Result<(PeriodicSignal, PeriodicSignal), IoError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "u", "y"] {
        return Err(IoError::Signals(format!(
            "expected header index,u,y, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let (mut u, mut y) = (Vec::new(), Vec::new());
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let field = |i: usize| -> Result<&str, IoError> {
            record
                .get(i)
                .ok_or_else(|| IoError::Signals(format!("row {row} is short")))
        };
        let index: usize = field(0)?
            .trim()
            .parse()
            .map_err(|_| IoError::Signals(format!("row {row}: bad index")))?;
        if index != row {
            return Err(IoError::Signals(format!("row {row} has index {index}")));
        }
        let num = |s: &str| -> Result<f64, IoError> {
            s.trim()
                .parse()
                .map_err(|_| IoError::Signals(format!("row {row}: bad number {s:?}")))
        };
        u.push(num(field(1)?)?);
        y.push(num(field(2)?)?);
    }
    let u = PeriodicSignal::new(u).map_err(|e| IoError::Signals(e.to_string()))?;
    let y = PeriodicSignal::new(y).map_err(|e| IoError::Signals(e.to_string()))?;
    Ok((u, y))
}

pub fn write_signals_file(path: &Path, u: &PeriodicSignal, y: &PeriodicSignal) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_signals(&mut buf, u, y)?;
    fs::write(path, buf).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_signals_file(path: &Path) -> Result<(PeriodicSignal, PeriodicSignal), IoError> {
    read_signals(read_to_string(path)?.as_bytes())
}

/// `k,y,u`, 17 significant digits.
pub fn write_trajectory<W: Write>(out: W, y: &[f64], u: &[f64]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "y", "u"])?;
    for (k, (a, b)) in y.iter().zip(u).enumerate() {
        w.write_record([k.to_string(), format!("{a:.16e}"), format!("{b:.16e}")])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Rows of named numeric columns, shortest round-trip formatting.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Sweep table: `alpha,beta,T,omega,re,im,phase,kbar,feasible`.
pub fn write_slope_bounds<W: Write>(out: W, rows: &[SlopeBound]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "beta", "T", "omega", "re", "im", "phase", "kbar", "feasible"])?;
    for row in rows {
        let kbar = match row.kbar {
            CriticalSlope::Finite(k) => format!("{k:?}"),
            CriticalSlope::Infinite => "inf".into(),
            CriticalSlope::Infeasible => "infeasible".into(),
        };
        w.write_record([
            row.freq.alpha().to_string(),
            row.freq.beta().to_string(),
            row.freq.period().to_string(),
            format!("{:?}", row.freq.omega()),
            format!("{:?}", row.re),
            format!("{:?}", row.im),
            format!("{:?}", row.response().arg()),
            kbar,
            row.kbar.is_feasible().to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signals_round_trip_is_exact() {
        let u = PeriodicSignal::new(vec![1.0, -0.1 + 0.2, 1e-300, std::f64::consts::PI]).unwrap();
        let y = PeriodicSignal::new(vec![0.0, -2.5, 3.0e10, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        write_signals(&mut buf, &u, &y).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,u,y\n0,1.0,0.0\n"));
        let (u2, y2) = read_signals(buf.as_slice()).unwrap();
        assert_eq!(u, u2);
        assert_eq!(y, y2);
    }

    #[test]
    fn signals_reject_bad_header_and_index() {
        assert!(read_signals("i,u,y\n0,1,2\n".as_bytes()).is_err());
        assert!(read_signals("index,u,y\n1,1,2\n".as_bytes()).is_err());
        assert!(read_signals("index,u,y\n".as_bytes()).is_err());
    }

    #[test]
    fn trajectory_format() {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &[1.0, 0.1], &[-1.0, 2.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "k,y,u\n0,1.0000000000000000e0,-1.0000000000000000e0\n1,1.0000000000000001e-1,2.0000000000000000e0\n"
        );
    }

    #[test]
    fn slope_bound_rows() {
        let g = parse_plant(r#"{"num":[1,0],"den":[1,-1.8,0.81]}"#).unwrap();
        let rows = crate::phase_cert::sweep(&g, 3, false).unwrap();
        let mut buf = Vec::new();
        write_slope_bounds(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "alpha,beta,T,omega,re,im,phase,kbar,feasible");
        assert_eq!(lines.len(), rows.len() + 1);
        assert!(lines[1].starts_with("1,3,6,"));
        assert!(lines[1].ends_with(",true"));
    }

    #[test]
    fn plant_errors() {
        assert!(matches!(parse_plant("{"), Err(IoError::Json(_))));
        assert!(matches!(
            parse_plant(r#"{"num":[1],"den":[1,-2]}"#),
            Err(IoError::Plant(LtiError::UnstablePole { .. }))
        ));
    }
}
