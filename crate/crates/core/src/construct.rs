//! End-to-end construction of a nonlinearity and a periodic cycle for a plant
//! at one rational frequency.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::interp::{
    compute_shift, interpolate, loop_transform_data, odd_append, DataPairSet, InterpError,
    PiecewiseNonlinearity, SlopeLimit,
};
use crate::lti::{LtiError, PeriodicSignal, RationalFrequency};
use crate::lurye_sim::{periodic_response_extended, verify_cycle, CycleVerdict, SimError};
use crate::phase_cert::{phase_check, slope_bound, CriticalSlope, PhaseCheck, PhaseError};
use crate::plant::{FrequencyResponse, Plant};

/// Residual bound the constructed cycle must meet before it is returned.
pub const SELF_VERIFY_TOL: f64 = 1e-8;

/// Periods simulated by the self-check. Constructed cycles are repelling, so
/// longer runs are left to explicit verification.
pub const SELF_VERIFY_PERIODS: usize = 1;

/// Breakpoint offset relative to the output amplitude.
pub const CYCLE_OFFSET_REL: f64 = 1e-11;

/// Breakpoint offset relative to the smallest breakpoint gap.
pub const CYCLE_OFFSET_GAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    MonotoneInf,
    OddInf,
    SlopeK,
    OddSlopeK,
}

impl Variant {
    pub fn new(odd: bool, slope: SlopeLimit) -> Self {
        match (odd, slope) {
            (false, SlopeLimit::Infinite) => Variant::MonotoneInf,
            (true, SlopeLimit::Infinite) => Variant::OddInf,
            (false, SlopeLimit::Finite(_)) => Variant::SlopeK,
            (true, SlopeLimit::Finite(_)) => Variant::OddSlopeK,
        }
    }

    pub fn is_odd(&self) -> bool {
        matches!(self, Variant::OddInf | Variant::OddSlopeK)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructError {
    #[error(
        "phase condition fails at {alpha}/{beta}: |delta| = {delta_abs} exceeds the bound {bound}",
        alpha = .check.freq.alpha(),
        beta = .check.freq.beta(),
        delta_abs = .check.delta.abs(),
        bound = .check.bound
    )]
    PhaseConditionFailed { check: Box<PhaseCheck> },
    #[error("constructed cycle failed its self-check (max residual {residual:e})")]
    SelfVerifyFailed {
        residual: f64,
        verdict: Box<CycleVerdict>,
    },
    #[error("interpolated nonlinearity lost its expected structure: {0}")]
    Structure(String),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Everything needed to reproduce and re-check a constructed cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionCertificate {
    pub freq: RationalFrequency,
    /// `G(e^{j omega})` of the original plant.
    #[serde(with = "crate::complex_serde")]
    pub response: Complex64,
    pub variant: Variant,
    /// Slope bound the nonlinearity was built for.
    pub slope: SlopeLimit,
    /// Critical slope of the plant at `freq`.
    pub kbar: CriticalSlope,
    /// Phase test on the transformed plant `G + 1/k` (or `G` when `k` is infinite).
    pub phase: PhaseCheck,
    /// DC gain of the transformed plant, when the shift needed it.
    pub transformed_dc: Option<f64>,
    pub xi: f64,
    #[serde(rename = "U_T")]
    pub u: PeriodicSignal,
    #[serde(rename = "Y_T")]
    pub y: PeriodicSignal,
    pub phi: PiecewiseNonlinearity,
    pub verdict: CycleVerdict,
}

/// `U_T = Re{V_T}` and the plant's periodic response to it.
pub fn periodic_data(
    plant: &Plant,
    freq: &RationalFrequency,
) -> Result<(PeriodicSignal, PeriodicSignal), LtiError> {
    let u = PeriodicSignal::new(freq.phasor().iter().map(|v| v.re).collect())?;
    let y = plant.periodic_response(&u)?;
    Ok((u, y))
}

fn accurate_response(plant: &Plant, u: &PeriodicSignal) -> Result<PeriodicSignal, ConstructError> {
    match plant.realization() {
        Some(ss) => Ok(periodic_response_extended(&ss, u)?),
        None => Ok(plant.periodic_response(u)?),
    }
}

/// Builds `phi` in the class selected by `odd` and `slope`, together with a
/// `T`-periodic solution `(U_T, Y_T)` of the loop of `plant` and `phi`.
///
/// For finite `k` the construction runs on `G + 1/k` and the data is mapped
/// back through the loop transformation. When `alpha` is even the cycle is
/// shifted by a constant so that `phi` passes through the origin, or, for the
/// odd class, the data is reflected through the origin instead.
pub fn construct(
    plant: &Plant,
    freq: RationalFrequency,
    odd: bool,
    slope: SlopeLimit,
) -> Result<ConstructionCertificate, ConstructError> {
    if let SlopeLimit::Finite(k) = slope {
        if !(k > 0.0 && k.is_finite()) {
            return Err(InterpError::InvalidSlope(k).into());
        }
    }
    let variant = Variant::new(odd, slope);
    let transformed = match slope {
        SlopeLimit::Finite(k) => plant.plus_constant(1.0 / k),
        SlopeLimit::Infinite => plant.clone(),
    };
    let phase = phase_check(&transformed, freq, odd)?;
    if !phase.satisfied {
        return Err(ConstructError::PhaseConditionFailed {
            check: Box::new(phase),
        });
    }
    let kbar = slope_bound(plant, freq, odd)?.kbar;

    let (mut u, y_tilde) = periodic_data(&transformed, &freq)?;
    let source = transformed.response_at(freq.omega())?;
    let mut data = DataPairSet::from_signals(&y_tilde, &u).with_source(freq, source);
    let mut xi = 0.0;
    let mut transformed_dc = None;
    let append = freq.alpha_is_even() && odd;
    if freq.alpha_is_even() {
        if odd {
            data = odd_append(&data);
        } else {
            let dc = transformed.dc_gain().ok_or(LtiError::MissingDcGain)?;
            xi = compute_shift(&data, dc)?;
            transformed_dc = Some(dc);
            u = u.map(|v| v + xi);
            data = data.shifted(xi, dc);
        }
    }

    // y = y~ - u/k holds exactly only in exact arithmetic; the breakpoints are
    // taken from an accurate direct response so the cycle stays consistent
    // with phi to rounding level
    let y = accurate_response(plant, &u)?;
    let mut direct = DataPairSet::from_signals(&y, &u).with_source(freq, source);
    if append {
        direct = odd_append(&direct);
    }
    let phi = match slope {
        SlopeLimit::Infinite => interpolate(&direct)?,
        SlopeLimit::Finite(k) => {
            let mapped = loop_transform_data(&data, k)?;
            let gap = mapped
                .pairs()
                .iter()
                .zip(direct.pairs())
                .map(|(a, b)| (a.y - b.y).abs())
                .fold(0.0, f64::max);
            if gap > 1e-9 * y.max_abs().max(1.0) {
                return Err(ConstructError::Structure(format!(
                    "loop-transformed data is {gap:e} away from the plant response"
                )));
            }
            interpolate(&direct)?.with_slope_bound(k)?
        }
    };
    if odd && !phi.is_odd() {
        return Err(ConstructError::Structure("odd data gave a non-odd interpolant".into()));
    }
    // each cycle sample sits on a kink of phi, where the rounded loop need
    // not have an exact cycle; moving the kinks off the samples makes the
    // period map affine around the cycle
    let phi = if phi.is_single_valued() && phi.breakpoints().len() > 1 {
        let eta = (CYCLE_OFFSET_REL * y.max_abs().max(1.0)).min(CYCLE_OFFSET_GAP * phi.min_gap());
        phi.offset_breakpoints(eta)?
    } else {
        phi
    };
    let origin = phi.evaluate(0.0).distance(0.0);
    if origin > 1e-9 {
        return Err(ConstructError::Structure(format!(
            "nonlinearity misses the origin by {origin:e}"
        )));
    }

    let verdict = verify_cycle(plant, &phi, &u, &y, SELF_VERIFY_PERIODS)?;
    if !verdict.passes(SELF_VERIFY_TOL) {
        return Err(ConstructError::SelfVerifyFailed {
            residual: verdict.max_residual(),
            verdict: Box::new(verdict),
        });
    }
    Ok(ConstructionCertificate {
        freq,
        response: plant.response_at(freq.omega())?,
        variant,
        slope,
        kbar,
        phase,
        transformed_dc,
        xi,
        u,
        y,
        phi,
        verdict,
    })
}
