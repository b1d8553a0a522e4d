//! Closed-loop simulation of `y = G u`, `u_k = -phi(y_k)`, cycle verification
//! and the Nyquist gain.
//!
//! Constructed cycles are usually repelling: the period map expands
//! perturbations by a factor of a few per period. Forward simulation in `f64`
//! therefore drifts away from the cycle within a handful of periods. Cycles
//! are verified by (1) refining the periodic initial state with Newton's
//! method on the period map and (2) simulating in double-double arithmetic.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;
use twofloat::TwoFloat;

use crate::interp::PiecewiseNonlinearity;
use crate::lti::{solve_checked, spectral_radius, LtiError, PeriodicSignal, StateSpaceRealization, TransferFunction};
use crate::plant::Plant;
use crate::precision::Real;

/// `max|y|` above which a cycle counts as non-trivial.
pub const NONTRIVIAL_THRESHOLD: f64 = 1e-6;

const LOOP_DAMPING: f64 = 0.5;
const LOOP_MAX_ITER: usize = 200;
const LOOP_TOL: f64 = 1e-12;

const NEWTON_MAX_ITER: usize = 30;
const NEWTON_TOL: f64 = 1e-28;
const LINE_SEARCH_STEPS: usize = 40;

/// Smallest admissible `1 + k D`.
const FEEDTHROUGH_MARGIN: f64 = 1e-12;

pub const NYQUIST_SCAN_STEPS: usize = 1000;
pub const DEFAULT_K_MAX: f64 = 1e4;
pub const DEFAULT_NYQUIST_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("nonlinearity is multivalued and cannot be simulated")]
    MultivaluedPhi,
    #[error("algebraic loop did not converge at step {step}")]
    AlgebraicLoopFailure { step: usize },
    #[error("feedback is ill-posed at k = {k}: 1 + k D = {denominator}")]
    IllPosedFeedback { k: f64, denominator: f64 },
    #[error("initial state has {got} entries, realization has {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error("u has period {u} but y has period {y}")]
    PeriodMismatch { u: usize, y: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Initial state of the `T`-periodic response to the periodic input `u`.
///
/// Solves `x0 = A^T x0 + sum_i A^{T-1-i} B u_i`.
pub fn periodic_steady_state(
    ss: &StateSpaceRealization,
    u: &PeriodicSignal,
) -> Result<DVector<f64>, SimError> {
    let n = ss.states();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut forced = DVector::<f64>::zeros(n);
    for &ui in u.values() {
        forced = &ss.a * forced + &ss.b * ui;
    }
    let a_t = crate::lti::matrix_power(&ss.a, u.period());
    Ok(solve_checked(DMatrix::identity(n, n) - a_t, &forced)?)
}

/// [`periodic_steady_state`] refined in double-double arithmetic.
///
/// Starting the nonlinear refinement here, rather than from the rounded `f64`
/// state, puts each output sample on the side of its breakpoint fixed by the
/// rounding of the data instead of by the rounding of the state.
pub fn periodic_steady_state_extended(
    ss: &StateSpaceRealization,
    u: &PeriodicSignal,
) -> Result<Vec<TwoFloat>, SimError> {
    let n = ss.states();
    let x0 = periodic_steady_state(ss, u)?;
    let mut x: Vec<TwoFloat> = x0.iter().map(|&v| TwoFloat::from(v)).collect();
    if n == 0 {
        return Ok(x);
    }
    let lhs = crate::lti::matrix_power(&ss.a, u.period()) - DMatrix::identity(n, n);
    for _ in 0..3 {
        let end = open_loop_extended(ss, &x, u.values());
        let f = DVector::from_iterator(n, end.iter().zip(&x).map(|(&p, &q)| -f64::from(p - q)));
        let delta = solve_checked(lhs.clone(), &f)?;
        x = x
            .iter()
            .zip(delta.iter())
            .map(|(&xi, &di)| xi + TwoFloat::from(di))
            .collect();
    }
    Ok(x)
}

/// Periodic response computed from the double-double steady state and
/// rounded once, so each sample is within half an ulp of the exact value.
pub fn periodic_response_extended(
    ss: &StateSpaceRealization,
    u: &PeriodicSignal,
) -> Result<PeriodicSignal, SimError> {
    let mut x = periodic_steady_state_extended(ss, u)?;
    let mut y = Vec::with_capacity(u.period());
    for &ui in u.values() {
        let out = x
            .iter()
            .zip(ss.c.iter())
            .fold(TwoFloat::from(ss.d) * TwoFloat::from(ui), |acc, (&xi, &ci)| {
                acc + TwoFloat::from(ci) * xi
            });
        y.push(f64::from(out));
        x = open_loop_extended(ss, &x, &[ui]);
    }
    Ok(PeriodicSignal::new(y)?)
}

fn open_loop_extended(ss: &StateSpaceRealization, x0: &[TwoFloat], u: &[f64]) -> Vec<TwoFloat> {
    let mut x = x0.to_vec();
    for &ui in u {
        x = (0..x.len())
            .map(|i| {
                x.iter()
                    .enumerate()
                    .fold(TwoFloat::from(ss.b[i]) * TwoFloat::from(ui), |acc, (j, &xj)| {
                        acc + TwoFloat::from(ss.a[(i, j)]) * xj
                    })
            })
            .collect();
    }
    x
}

/// Output of the open loop driven by `u` from `x0`, one entry per input sample.
pub fn simulate_open_loop(ss: &StateSpaceRealization, x0: &DVector<f64>, u: &[f64]) -> Vec<f64> {
    let mut x = x0.clone();
    u.iter()
        .map(|&ui| {
            let y = ss.c.dot(&x) + ss.d * ui;
            x = &ss.a * &x + &ss.b * ui;
            y
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<R> {
    pub y: Vec<R>,
    pub u: Vec<R>,
    /// Local slope of `phi` at each `y_k`.
    pub slopes: Vec<f64>,
    pub final_state: Vec<R>,
}

impl<R: Real> Trajectory<R> {
    pub fn y_f64(&self) -> Vec<f64> {
        self.y.iter().map(|v| v.to_f64()).collect()
    }

    pub fn u_f64(&self) -> Vec<f64> {
        self.u.iter().map(|v| v.to_f64()).collect()
    }
}

/// Solves `y = cx - D phi(y)` for the output at one step.
fn close_loop<R: Real>(
    phi: &PiecewiseNonlinearity,
    d: f64,
    cx: R,
    step: usize,
) -> Result<(R, R, f64), SimError> {
    if d == 0.0 {
        let (v, s) = phi.eval_single(cx);
        return Ok((cx, -v, s));
    }
    let dr = R::from_f64(d);
    let half = R::from_f64(LOOP_DAMPING);
    let mut y = cx;
    let mut converged = false;
    for _ in 0..LOOP_MAX_ITER {
        let (v, _) = phi.eval_single(y);
        let next = half * y + half * (cx - dr * v);
        let change = (next - y).abs().to_f64();
        y = next;
        if change <= LOOP_TOL * y.abs().to_f64().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SimError::AlgebraicLoopFailure { step });
    }
    // exact on the final linear piece
    let residual = |y: R| y + dr * phi.eval_single(y).0 - cx;
    for _ in 0..4 {
        let r = residual(y);
        let s = phi.eval_single(y).1;
        let denom = 1.0 + d * s;
        if r.to_f64() == 0.0 || denom.abs() < FEEDTHROUGH_MARGIN {
            break;
        }
        let candidate = y - r / R::from_f64(denom);
        if residual(candidate).abs() < r.abs() {
            y = candidate;
        } else {
            break;
        }
    }
    let (v, s) = phi.eval_single(y);
    Ok((y, -v, s))
}

/// Simulates the closed loop in the scalar type `R`.
pub fn simulate_closed_loop_in<R: Real>(
    ss: &StateSpaceRealization,
    phi: &PiecewiseNonlinearity,
    x0: &[R],
    steps: usize,
) -> Result<Trajectory<R>, SimError> {
    if !phi.is_single_valued() {
        return Err(SimError::MultivaluedPhi);
    }
    let n = ss.states();
    if x0.len() != n {
        return Err(SimError::StateDimension {
            expected: n,
            got: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let mut next = x.clone();
    let mut out = Trajectory {
        y: Vec::with_capacity(steps),
        u: Vec::with_capacity(steps),
        slopes: Vec::with_capacity(steps),
        final_state: Vec::new(),
    };
    for k in 0..steps {
        let cx = x
            .iter()
            .zip(ss.c.iter())
            .fold(R::from_f64(0.0), |acc, (&xi, &ci)| acc + R::from_f64(ci) * xi);
        let (y, u, s) = close_loop(phi, ss.d, cx, k)?;
        for (i, slot) in next.iter_mut().enumerate() {
            let mut acc = R::from_f64(ss.b[i]) * u;
            for (j, &xj) in x.iter().enumerate() {
                let a = ss.a[(i, j)];
                if a != 0.0 {
                    acc = acc + R::from_f64(a) * xj;
                }
            }
            *slot = acc;
        }
        std::mem::swap(&mut x, &mut next);
        out.y.push(y);
        out.u.push(u);
        out.slopes.push(s);
    }
    out.final_state = x;
    Ok(out)
}

/// Simulates `x+ = A x + B u`, `y = C x + D u`, `u = -phi(y)` in `f64`.
pub fn simulate_closed_loop(
    ss: &StateSpaceRealization,
    phi: &PiecewiseNonlinearity,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<Trajectory<f64>, SimError> {
    simulate_closed_loop_in(ss, phi, x0.as_slice(), steps)
}

/// Jacobian of the closed-loop map over the recorded steps.
fn monodromy(ss: &StateSpaceRealization, slopes: &[f64]) -> DMatrix<f64> {
    let n = ss.states();
    let bc = &ss.b * ss.c.transpose();
    slopes.iter().fold(DMatrix::identity(n, n), |acc, &s| {
        let gain = s / (1.0 + ss.d * s);
        (&ss.a - &bc * gain) * acc
    })
}

/// Periodic initial state refined to double-double accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedCycle {
    pub state: Vec<TwoFloat>,
    /// `max|P(x) - x|` for the period map `P`.
    pub return_residual: f64,
    pub monodromy_radius: f64,
    pub iterations: usize,
}

fn max_diff(a: &[TwoFloat], b: &[TwoFloat]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| f64::from(p - q).abs())
        .fold(0.0, f64::max)
}

/// Newton iteration on `P(x) - x = 0` for the closed-loop period map,
/// started from `x0`.
///
/// The map is piecewise affine, so once the segment pattern of the cycle is
/// found one step lands on the fixed point up to rounding.
pub fn refine_cycle(
    ss: &StateSpaceRealization,
    phi: &PiecewiseNonlinearity,
    x0: &[TwoFloat],
    period: usize,
) -> Result<RefinedCycle, SimError> {
    if period == 0 {
        return Err(SimError::InvalidArgument("period must be positive".into()));
    }
    let n = ss.states();
    let mut x = x0.to_vec();
    let mut traj = simulate_closed_loop_in(ss, phi, &x, period)?;
    let mut residual = max_diff(&traj.final_state, &x);
    let mut best = (x.clone(), residual, traj.slopes.clone());
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITER && n > 0 {
        let scale = x.iter().map(|v| f64::from(*v).abs()).fold(1.0, f64::max);
        if best.1 <= NEWTON_TOL * scale {
            break;
        }
        let jac = monodromy(ss, &traj.slopes) - DMatrix::identity(n, n);
        let f = DVector::from_iterator(
            n,
            traj.final_state
                .iter()
                .zip(&x)
                .map(|(&p, &q)| -f64::from(p - q)),
        );
        let Ok(delta) = solve_checked(jac, &f) else {
            break;
        };
        // the cycle sits on breakpoints of phi, so the one-sided slopes used
        // for the step may belong to the wrong piece; backtrack until the
        // residual decreases
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..LINE_SEARCH_STEPS {
            let candidate: Vec<TwoFloat> = x
                .iter()
                .zip(delta.iter())
                .map(|(&xi, &di)| xi + TwoFloat::from(lambda * di))
                .collect();
            let cand_traj = simulate_closed_loop_in(ss, phi, &candidate, period)?;
            let cand_residual = max_diff(&cand_traj.final_state, &candidate);
            if cand_residual < residual {
                x = candidate;
                traj = cand_traj;
                residual = cand_residual;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        best = (x.clone(), residual, traj.slopes.clone());
    }
    let (x, residual, slopes) = best;
    traj.slopes = slopes;
    let monodromy_radius = if n == 0 {
        0.0
    } else {
        spectral_radius(&monodromy(ss, &traj.slopes))
    };
    Ok(RefinedCycle {
        state: x,
        return_residual: residual,
        monodromy_radius,
        iterations,
    })
}

/// Outcome of checking that `(u, y, phi)` is a periodic solution of the loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleVerdict {
    pub period: usize,
    /// Periods over which the periodicity residual is measured.
    pub periods: usize,
    /// `max|y - periodic_response(G, u)|`.
    pub residual_linear: f64,
    /// `max_k dist(-u_k, phi(y_k))`.
    pub residual_interpolation: f64,
    /// `max|y_{k+T} - y_k|` along the simulated trajectory.
    pub residual_periodicity: Option<f64>,
    /// `max|y_k - Y_{k mod T}|` along the simulated trajectory.
    pub residual_tracking: Option<f64>,
    pub amplitude: f64,
    pub nontrivial: bool,
    pub simulated: bool,
    pub monodromy_radius: Option<f64>,
    pub return_residual: Option<f64>,
    /// Tracking error of a plain `f64` simulation from the unrefined state.
    pub f64_drift: Option<f64>,
    pub notes: Vec<String>,
}

impl CycleVerdict {
    pub fn max_residual(&self) -> f64 {
        [
            Some(self.residual_linear),
            Some(self.residual_interpolation),
            self.residual_periodicity,
            self.residual_tracking,
        ]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.nontrivial && self.max_residual() < tol
    }
}

/// Checks linear consistency, interpolation consistency and non-triviality of
/// a candidate cycle; for rational plants with single-valued `phi` also
/// simulates `periods + 1` periods from the periodic initial state.
pub fn verify_cycle(
    plant: &Plant,
    phi: &PiecewiseNonlinearity,
    u: &PeriodicSignal,
    y: &PeriodicSignal,
    periods: usize,
) -> Result<CycleVerdict, SimError> {
    let t = u.period();
    if y.period() != t {
        return Err(SimError::PeriodMismatch {
            u: t,
            y: y.period(),
        });
    }
    if periods == 0 {
        return Err(SimError::InvalidArgument("periods must be positive".into()));
    }
    let mut notes = Vec::new();
    let residual_linear = match plant.periodic_response(u) {
        Ok(expected) => max_abs_diff(expected.values(), y.values()),
        Err(e) => {
            notes.push(format!("linear response unavailable: {e}"));
            f64::INFINITY
        }
    };
    let residual_interpolation = u
        .values()
        .iter()
        .zip(y.values())
        .map(|(&uk, &yk)| phi.evaluate(yk).distance(-uk))
        .fold(0.0, f64::max);
    let amplitude = y.max_abs();
    let mut verdict = CycleVerdict {
        period: t,
        periods,
        residual_linear,
        residual_interpolation,
        residual_periodicity: None,
        residual_tracking: None,
        amplitude,
        nontrivial: amplitude > NONTRIVIAL_THRESHOLD,
        simulated: false,
        monodromy_radius: None,
        return_residual: None,
        f64_drift: None,
        notes,
    };

    let Some(ss) = plant.realization() else {
        verdict.notes.push("anchor plant: no realization, simulation skipped".into());
        return Ok(verdict);
    };
    if !phi.is_single_valued() {
        verdict.notes.push("multivalued nonlinearity: simulation skipped".into());
        return Ok(verdict);
    }
    if let Err(e) = simulate_and_fold(&ss, phi, u, y, periods, &mut verdict) {
        verdict.notes.push(format!("simulation failed: {e}"));
        verdict.residual_periodicity = Some(f64::INFINITY);
        verdict.residual_tracking = Some(f64::INFINITY);
    }
    Ok(verdict)
}

fn simulate_and_fold(
    ss: &StateSpaceRealization,
    phi: &PiecewiseNonlinearity,
    u: &PeriodicSignal,
    y: &PeriodicSignal,
    periods: usize,
    verdict: &mut CycleVerdict,
) -> Result<(), SimError> {
    let t = u.period();
    let steps = (periods + 1) * t;
    let x0 = periodic_steady_state(ss, u)?;

    let plain = simulate_closed_loop(ss, phi, &x0, steps)?;
    verdict.f64_drift = Some(tracking(&plain.y, y.values()));

    let (refined, traj) = refined_trajectory(ss, phi, u, steps)?;
    let periodicity = (0..periods * t)
        .map(|k| f64::from(traj.y[k + t] - traj.y[k]).abs())
        .fold(0.0, f64::max);
    verdict.residual_periodicity = Some(periodicity);
    verdict.residual_tracking = Some(tracking(&traj.y_f64(), y.values()));
    verdict.monodromy_radius = Some(refined.monodromy_radius);
    verdict.return_residual = Some(refined.return_residual);
    verdict.simulated = true;
    Ok(())
}

fn refined_trajectory(
    ss: &StateSpaceRealization,
    phi: &PiecewiseNonlinearity,
    u: &PeriodicSignal,
    steps: usize,
) -> Result<(RefinedCycle, Trajectory<TwoFloat>), SimError> {
    let start = periodic_steady_state_extended(ss, u)?;
    let refined = refine_cycle(ss, phi, &start, u.period())?;
    let traj = simulate_closed_loop_in(ss, phi, &refined.state, steps)?;
    Ok((refined, traj))
}

/// Closed-loop trajectory over `periods` periods from the refined periodic
/// state of the cycle driven by `u`.
pub fn cycle_trajectory(
    plant: &Plant,
    phi: &PiecewiseNonlinearity,
    u: &PeriodicSignal,
    periods: usize,
) -> Result<Trajectory<f64>, SimError> {
    let ss = plant
        .realization()
        .ok_or_else(|| SimError::InvalidArgument("anchor plants cannot be simulated".into()))?;
    let (_, traj) = refined_trajectory(&ss, phi, u, periods * u.period())?;
    Ok(Trajectory {
        y: traj.y_f64(),
        u: traj.u_f64(),
        slopes: traj.slopes,
        final_state: traj.final_state.iter().map(|&v| f64::from(v)).collect(),
    })
}

fn tracking(sim: &[f64], cycle: &[f64]) -> f64 {
    sim.iter()
        .enumerate()
        .map(|(k, &v)| (v - cycle[k % cycle.len()]).abs())
        .fold(0.0, f64::max)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NyquistMethod {
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NyquistResult {
    pub k_n: f64,
    pub method: NyquistMethod,
    pub tolerance: f64,
    pub k_max: f64,
    /// False when the loop stays stable for every scanned gain up to `k_max`.
    pub crossed: bool,
}

/// Spectral radius of `A - B k (1 + k D)^{-1} C`.
pub fn closed_loop_radius(ss: &StateSpaceRealization, k: f64) -> Result<f64, SimError> {
    let denominator = 1.0 + k * ss.d;
    if denominator <= FEEDTHROUGH_MARGIN {
        return Err(SimError::IllPosedFeedback { k, denominator });
    }
    if ss.states() == 0 {
        return Ok(0.0);
    }
    let acl = &ss.a - &ss.b * ss.c.transpose() * (k / denominator);
    Ok(spectral_radius(&acl))
}

/// Smallest gain at which linear feedback destabilizes `G`.
pub fn nyquist_gain(g: &TransferFunction, k_max: f64, tol: f64) -> Result<NyquistResult, SimError> {
    if !(k_max > 0.0 && k_max.is_finite()) {
        return Err(SimError::InvalidArgument(format!("k_max must be positive, got {k_max}")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(SimError::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let ss = g.realize();
    let unstable = |k: f64| closed_loop_radius(&ss, k).map(|r| r >= 1.0);
    let step = k_max / NYQUIST_SCAN_STEPS as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..=NYQUIST_SCAN_STEPS {
        let k = if i == NYQUIST_SCAN_STEPS { k_max } else { i as f64 * step };
        if unstable(k)? {
            hi = Some(k);
            break;
        }
        lo = k;
    }
    let Some(mut hi) = hi else {
        return Ok(NyquistResult {
            k_n: k_max,
            method: NyquistMethod::Bisection,
            tolerance: tol,
            k_max,
            crossed: false,
        });
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if unstable(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(NyquistResult {
        k_n: 0.5 * (lo + hi),
        method: NyquistMethod::Bisection,
        tolerance: tol,
        k_max,
        crossed: true,
    })
}
