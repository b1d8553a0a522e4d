//! Phase conditions at rational frequencies and the critical slopes they imply.
//!
//! At `omega = alpha pi / beta` with period `T`, a monotone nonlinearity closing
//! a `T`-periodic cycle exists when the phase of `G(e^{j omega})` is within
//! `pi/T` of `pi` (within `pi/(2 beta)` if the nonlinearity must be odd). For
//! slope-restricted nonlinearities the test is applied to `G + 1/k`, and the
//! smallest admissible `k` has a closed form.

use std::cmp::Ordering;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::lti::{gcd, LtiError, RationalFrequency};
use crate::plant::FrequencyResponse;

/// Radians; phase comparisons within this band count as satisfied and boundary.
pub const PHASE_TOL: f64 = 1e-9;

/// Responses with magnitude below this have no meaningful phase.
const ZERO_RESPONSE: f64 = 1e-12;

/// Relative band on `R tan + |I|` treated as exactly zero.
const CRITICAL_BAND: f64 = 1e-12;

/// Relative tolerance when comparing two critical slopes for ordering.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("phase offset {0} is outside [-pi, pi]")]
    Domain(f64),
    #[error("response magnitude {magnitude:e} at omega={omega} is too small to define a phase")]
    ZeroResponse { omega: f64, magnitude: f64 },
    #[error("beta_max must be at least 2, got {0}")]
    InvalidBetaMax(u32),
    #[error("no rational frequency with beta <= {beta_max} admits a destabilizing nonlinearity")]
    EmptyResult { beta_max: u32 },
    #[error(transparent)]
    Plant(#[from] LtiError),
}

/// Closed-form test `|delta| <= pi/T`.
pub fn lemma1_holds(delta: f64, period: usize) -> Result<bool, PhaseError> {
    if !(-PI..=PI).contains(&delta) {
        return Err(PhaseError::Domain(delta));
    }
    if period <= 1 {
        return Ok(true);
    }
    Ok(delta.abs() <= PI / period as f64)
}

/// Half-width of the admissible phase window around `pi`.
pub fn phase_bound(freq: &RationalFrequency, odd_variant: bool) -> f64 {
    if odd_variant {
        PI / (2.0 * freq.beta() as f64)
    } else {
        PI / freq.period() as f64
    }
}

/// `angle(G) - pi` wrapped to `(-pi, pi]`, computed as the principal angle of `-G`.
pub fn phase_offset(response: Complex64) -> f64 {
    let d = (-response.im).atan2(-response.re);
    if d <= -PI {
        d + 2.0 * PI
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseCheck {
    pub freq: RationalFrequency,
    #[serde(with = "crate::complex_serde")]
    pub response: Complex64,
    pub delta: f64,
    pub bound: f64,
    pub odd_variant: bool,
    pub satisfied: bool,
    pub boundary: bool,
}

pub fn phase_check<G: FrequencyResponse + ?Sized>(
    plant: &G,
    freq: RationalFrequency,
    odd_variant: bool,
) -> Result<PhaseCheck, PhaseError> {
    let response = plant.response_at(freq.omega())?;
    let magnitude = response.norm();
    if magnitude < ZERO_RESPONSE {
        return Err(PhaseError::ZeroResponse {
            omega: freq.omega(),
            magnitude,
        });
    }
    let delta = phase_offset(response);
    let bound = phase_bound(&freq, odd_variant);
    Ok(PhaseCheck {
        freq,
        response,
        delta,
        bound,
        odd_variant,
        satisfied: delta.abs() <= bound + PHASE_TOL,
        boundary: (delta.abs() - bound).abs() <= PHASE_TOL,
    })
}

/// Critical slope at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalSlope {
    Finite(f64),
    /// Only the monotone (`k = inf`) construction works at this frequency.
    Infinite,
    /// No destabilizing nonlinearity is constructed at this frequency.
    Infeasible,
}

impl CriticalSlope {
    pub fn finite(&self) -> Option<f64> {
        match self {
            CriticalSlope::Finite(k) => Some(*k),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        !matches!(self, CriticalSlope::Infeasible)
    }

    fn rank(&self) -> u8 {
        match self {
            CriticalSlope::Finite(_) => 0,
            CriticalSlope::Infinite => 1,
            CriticalSlope::Infeasible => 2,
        }
    }
}

impl Serialize for CriticalSlope {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CriticalSlope::Finite(k) => s.serialize_f64(*k),
            CriticalSlope::Infinite => s.serialize_str("inf"),
            CriticalSlope::Infeasible => s.serialize_str("infeasible"),
        }
    }
}

impl<'de> Deserialize<'de> for CriticalSlope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Marker(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(k) => Ok(CriticalSlope::Finite(k)),
            Raw::Marker(m) if m == "inf" => Ok(CriticalSlope::Infinite),
            Raw::Marker(m) if m == "infeasible" => Ok(CriticalSlope::Infeasible),
            Raw::Marker(m) => Err(serde::de::Error::custom(format!(
                "expected a number, \"inf\" or \"infeasible\", got {m:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeBound {
    pub freq: RationalFrequency,
    pub kbar: CriticalSlope,
    pub odd_variant: bool,
    /// `Re G(e^{j omega})`
    pub re: f64,
    /// `Im G(e^{j omega})`
    pub im: f64,
    /// `tan(pi/T)`, or `tan(pi/(2 beta))` for the odd variant.
    pub tan_bound: f64,
}

impl SlopeBound {
    pub fn response(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Smallest `k` for which `G + 1/k` meets the phase condition at `freq`.
///
/// `kbar = -t / (R t + |I|)` with `t = tan(pi/T)` (or `tan(pi/(2 beta))`).
pub fn slope_bound<G: FrequencyResponse + ?Sized>(
    plant: &G,
    freq: RationalFrequency,
    odd_variant: bool,
) -> Result<SlopeBound, PhaseError> {
    let response = plant.response_at(freq.omega())?;
    let (re, im) = (response.re, response.im);
    let t = phase_bound(&freq, odd_variant).tan();
    debug_assert!(t.is_finite() && t > 0.0);
    let denom = re * t + im.abs();
    let scale = re.abs() * t + im.abs();
    let kbar = if scale == 0.0 {
        CriticalSlope::Infeasible
    } else if denom < -CRITICAL_BAND * scale {
        let k = -t / denom;
        // R + 1/kbar = -|I|/t, zero only when the response is real
        debug_assert!(re + 1.0 / k <= CRITICAL_BAND * scale.max(1.0));
        CriticalSlope::Finite(k)
    } else if denom <= CRITICAL_BAND * scale && re < 0.0 {
        CriticalSlope::Infinite
    } else {
        CriticalSlope::Infeasible
    };
    Ok(SlopeBound {
        freq,
        kbar,
        odd_variant,
        re,
        im,
        tan_bound: t,
    })
}

/// All coprime `0 < alpha < beta <= beta_max`, ordered by `beta` then `alpha`.
pub fn coprime_pairs(beta_max: u32) -> impl Iterator<Item = RationalFrequency> {
    (2..=beta_max).flat_map(|beta| {
        (1..beta)
            .filter(move |&alpha| gcd(alpha, beta) == 1)
            .map(move |alpha| {
                RationalFrequency::new(alpha, beta).expect("coprime pair is a valid frequency")
            })
    })
}

fn compare_bounds(a: &SlopeBound, b: &SlopeBound) -> Ordering {
    let by_rank = a.kbar.rank().cmp(&b.kbar.rank());
    if by_rank != Ordering::Equal {
        return by_rank;
    }
    if let (CriticalSlope::Finite(x), CriticalSlope::Finite(y)) = (a.kbar, b.kbar) {
        if (x - y).abs() > TIE_TOL * x.abs().max(y.abs()) {
            return x.total_cmp(&y);
        }
    }
    (a.freq.period(), a.freq.beta(), a.freq.alpha()).cmp(&(
        b.freq.period(),
        b.freq.beta(),
        b.freq.alpha(),
    ))
}

/// Critical slopes for every coprime pair up to `beta_max`: finite values
/// ascending, then `inf`, then infeasible frequencies.
pub fn sweep<G: FrequencyResponse + ?Sized>(
    plant: &G,
    beta_max: u32,
    odd_variant: bool,
) -> Result<Vec<SlopeBound>, PhaseError> {
    if beta_max < 2 {
        return Err(PhaseError::InvalidBetaMax(beta_max));
    }
    let mut rows = coprime_pairs(beta_max)
        .map(|freq| slope_bound(plant, freq, odd_variant))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(compare_bounds);
    Ok(rows)
}

/// Feasible critical slopes sorted ascending; the first entry is the best.
pub fn grid_search<G: FrequencyResponse + ?Sized>(
    plant: &G,
    beta_max: u32,
    odd_variant: bool,
) -> Result<Vec<SlopeBound>, PhaseError> {
    let rows: Vec<_> = sweep(plant, beta_max, odd_variant)?
        .into_iter()
        .filter(|b| b.kbar.is_feasible())
        .collect();
    if rows.is_empty() {
        return Err(PhaseError::EmptyResult { beta_max });
    }
    Ok(rows)
}
