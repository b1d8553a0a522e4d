//! Plants as consumed by the construction pipeline.
//!
//! Besides rational transfer functions, a plant can be an "anchor": a value of
//! `G(e^{j omega})` at one frequency plus an optional DC gain. That is all the
//! construction needs, and it makes it possible to study synthetic phase
//! configurations that no particular rational plant was written down for.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lti::{LtiError, PeriodicSignal, StateSpaceRealization, TransferFunction};

/// Tolerance when matching a requested frequency against an anchor.
const ANCHOR_OMEGA_TOL: f64 = 1e-9;

/// Anything that can report `G(e^{j omega})`.
pub trait FrequencyResponse {
    fn response_at(&self, omega: f64) -> Result<Complex64, LtiError>;
}

impl FrequencyResponse for TransferFunction {
    fn response_at(&self, omega: f64) -> Result<Complex64, LtiError> {
        Ok(self.freq_response(omega))
    }
}

/// Plant known only through its response at one frequency (and optionally DC).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPlant {
    omega: f64,
    response: Complex64,
    dc: Option<f64>,
}

impl AnchorPlant {
    pub fn new(omega: f64, response: Complex64, dc: Option<f64>) -> Result<Self, LtiError> {
        if !omega.is_finite() || !response.re.is_finite() || !response.im.is_finite() {
            return Err(LtiError::NonFinite);
        }
        if dc.is_some_and(|d| !d.is_finite()) {
            return Err(LtiError::NonFinite);
        }
        if !(omega > 0.0 && omega < PI) {
            return Err(LtiError::AnchorFrequencyRange(omega));
        }
        Ok(Self {
            omega,
            response,
            dc,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn response(&self) -> Complex64 {
        self.response
    }

    pub fn dc(&self) -> Option<f64> {
        self.dc
    }

    /// Response to a periodic input lying in `span{1, cos(omega k), sin(omega k)}`.
    ///
    /// Inputs with energy at any other harmonic are rejected: the anchor does
    /// not pin down the plant there.
    pub fn periodic_response(&self, u: &PeriodicSignal) -> Result<PeriodicSignal, LtiError> {
        let t = u.period();
        let harmonic = self.omega * t as f64 / (2.0 * PI);
        let m = harmonic.round();
        if (harmonic - m).abs() > ANCHOR_OMEGA_TOL * t as f64 || m < 1.0 || 2.0 * m >= t as f64 {
            return Err(LtiError::AnchorFrequencyMismatch {
                anchor: self.omega,
                requested: 2.0 * PI * m / t as f64,
            });
        }
        let m = m as usize;
        let angle = |i: usize| 2.0 * PI * ((m * i) % t) as f64 / t as f64;
        let values = u.values();
        let mean = values.iter().sum::<f64>() / t as f64;
        let (mut a, mut b) = (0.0, 0.0);
        for (i, &v) in values.iter().enumerate() {
            a += v * angle(i).cos();
            b += v * angle(i).sin();
        }
        a *= 2.0 / t as f64;
        b *= 2.0 / t as f64;
        let scale = u.max_abs().max(1.0);
        let residual = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - mean - a * angle(i).cos() - b * angle(i).sin()).abs())
            .fold(0.0, f64::max);
        if residual > 1e-9 * scale {
            return Err(LtiError::OutsideAnchorSpan { residual });
        }
        let dc_part = if mean.abs() > 1e-14 * scale {
            mean * self.dc.ok_or(LtiError::MissingDcGain)?
        } else {
            0.0
        };
        // u = mean + Re{(a - jb) e^{j omega i}}
        let coeff = self.response * Complex64::new(a, -b);
        let out = (0..t)
            .map(|i| dc_part + (coeff * Complex64::from_polar(1.0, angle(i))).re)
            .collect();
        PeriodicSignal::new(out)
    }
}

impl FrequencyResponse for AnchorPlant {
    fn response_at(&self, omega: f64) -> Result<Complex64, LtiError> {
        if (omega - self.omega).abs() > ANCHOR_OMEGA_TOL {
            return Err(LtiError::AnchorFrequencyMismatch {
                anchor: self.omega,
                requested: omega,
            });
        }
        Ok(self.response)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    Rational(TransferFunction),
    Anchor(AnchorPlant),
}

impl Plant {
    pub fn dc_gain(&self) -> Option<f64> {
        match self {
            Plant::Rational(g) => Some(g.dc_gain()),
            Plant::Anchor(a) => a.dc,
        }
    }

    /// `G + c`; for anchors both the anchor value and the DC gain move by `c`.
    pub fn plus_constant(&self, c: f64) -> Plant {
        match self {
            Plant::Rational(g) => Plant::Rational(g.plus_constant(c)),
            Plant::Anchor(a) => Plant::Anchor(AnchorPlant {
                omega: a.omega,
                response: a.response + c,
                dc: a.dc.map(|d| d + c),
            }),
        }
    }

    pub fn periodic_response(&self, u: &PeriodicSignal) -> Result<PeriodicSignal, LtiError> {
        match self {
            Plant::Rational(g) => g.periodic_response(u),
            Plant::Anchor(a) => a.periodic_response(u),
        }
    }

    pub fn realization(&self) -> Option<StateSpaceRealization> {
        match self {
            Plant::Rational(g) => Some(g.realize()),
            Plant::Anchor(_) => None,
        }
    }

    pub fn as_transfer_function(&self) -> Option<&TransferFunction> {
        match self {
            Plant::Rational(g) => Some(g),
            Plant::Anchor(_) => None,
        }
    }
}

impl FrequencyResponse for Plant {
    fn response_at(&self, omega: f64) -> Result<Complex64, LtiError> {
        match self {
            Plant::Rational(g) => g.response_at(omega),
            Plant::Anchor(a) => a.response_at(omega),
        }
    }
}

/// On-disk plant description.
///
/// `{"num": [...], "den": [...]}` or
/// `{"anchor": {"omega": w, "re": x, "im": y}, "dc": d | null}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantFile {
    Rational {
        num: Vec<f64>,
        den: Vec<f64>,
    },
    Anchor {
        anchor: AnchorPoint,
        #[serde(default)]
        dc: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPoint {
    pub omega: f64,
    pub re: f64,
    pub im: f64,
}

impl PlantFile {
    pub fn into_plant(self) -> Result<Plant, LtiError> {
        match self {
            PlantFile::Rational { num, den } => TransferFunction::new(num, den).map(Plant::Rational),
            PlantFile::Anchor { anchor, dc } => {
                AnchorPlant::new(anchor.omega, Complex64::new(anchor.re, anchor.im), dc)
                    .map(Plant::Anchor)
            }
        }
    }
}
