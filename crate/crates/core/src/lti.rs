//! Stable discrete-time SISO plants.
//!
//! A [`TransferFunction`] is stored with coefficients in descending powers of
//! `z` and a monic denominator. Periodic inputs are handled through the folded
//! impulse response `h_i = sum_l g_{i + lT}`, which turns the plant into a
//! circulant matrix acting on one period of the signal.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Poles with magnitude at or above `1 - POLE_MARGIN` are rejected.
pub const POLE_MARGIN: f64 = 1e-9;

/// Relative pivot threshold below which `I - A^T` is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("denominator is empty")]
    EmptyDenominator,
    #[error("leading denominator coefficient is zero")]
    ZeroLeadingCoefficient,
    #[error("coefficients must be finite")]
    NonFinite,
    #[error("transfer function is improper: numerator degree {num} exceeds denominator degree {den}")]
    Improper { num: usize, den: usize },
    #[error("plant is not stable: pole magnitude {magnitude} is not below {limit}", limit = 1.0 - POLE_MARGIN)]
    UnstablePole { magnitude: f64 },
    #[error("I - A^T is numerically singular (spectral radius close to 1)")]
    SingularMatrix,
    #[error("periodic signal must have at least one sample")]
    EmptySignal,
    #[error("invalid rational frequency alpha={alpha}, beta={beta}: need 0 < alpha < beta and gcd(alpha, beta) = 1")]
    InvalidFrequency { alpha: u32, beta: u32 },
    #[error("anchor plant is only defined at omega={anchor}, requested omega={requested}")]
    AnchorFrequencyMismatch { anchor: f64, requested: f64 },
    #[error("anchor frequency must lie strictly inside (0, pi), got {0}")]
    AnchorFrequencyRange(f64),
    #[error("input is not in the span of the anchor frequency and DC (projection residual {residual:e})")]
    OutsideAnchorSpan { residual: f64 },
    #[error("anchor plant has no DC gain but the input has a constant component")]
    MissingDcGain,
    #[error("plant has no state-space realization (anchor plant)")]
    NoRealization,
}

/// Real rational discrete-time transfer function `num(z) / den(z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TransferFunction {
    /// Builds a transfer function from coefficients in descending powers of `z`.
    ///
    /// Leading zeros of the numerator are dropped, the denominator is scaled to
    /// be monic and every pole must lie strictly inside the unit disk.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, LtiError> {
        if den.is_empty() {
            return Err(LtiError::EmptyDenominator);
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(LtiError::NonFinite);
        }
        let lead = den[0];
        if lead == 0.0 {
            return Err(LtiError::ZeroLeadingCoefficient);
        }
        let first_nonzero = num.iter().position(|&c| c != 0.0);
        let mut num: Vec<f64> = match first_nonzero {
            Some(i) => num[i..].to_vec(),
            None => vec![0.0],
        };
        if num.len() > den.len() {
            return Err(LtiError::Improper {
                num: num.len() - 1,
                den: den.len() - 1,
            });
        }
        num.iter_mut().for_each(|c| *c /= lead);
        let den: Vec<f64> = den.iter().map(|c| c / lead).collect();
        let tf = Self { num, den };
        if let Some(magnitude) = tf
            .poles()
            .iter()
            .map(|p| p.norm())
            .find(|&m| m >= 1.0 - POLE_MARGIN)
        {
            return Err(LtiError::UnstablePole { magnitude });
        }
        Ok(tf)
    }

    /// Static gain `G(z) = k`.
    pub fn constant(k: f64) -> Result<Self, LtiError> {
        Self::new(vec![k], vec![1.0])
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    /// Monic denominator.
    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    /// Roots of the denominator, from the eigenvalues of its companion matrix.
    pub fn poles(&self) -> Vec<Complex64> {
        let n = self.order();
        if n == 0 {
            return Vec::new();
        }
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            companion[(0, j)] = -self.den[j + 1];
        }
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        companion.complex_eigenvalues().iter().copied().collect()
    }

    /// Largest pole magnitude (0 for a static gain).
    pub fn pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Evaluates `num(z) / den(z)` at an arbitrary complex point.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.num, z) / horner(&self.den, z)
    }

    /// `G(e^{j omega})`.
    pub fn freq_response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::from_polar(1.0, omega))
    }

    /// `G(1)`, the sum of the impulse response.
    pub fn dc_gain(&self) -> f64 {
        self.freq_response(0.0).re
    }

    /// Returns `G + c`, the plant seen through a constant feedthrough in parallel.
    pub fn plus_constant(&self, c: f64) -> Self {
        let n = self.den.len();
        let mut num = vec![0.0; n - self.num.len()];
        num.extend_from_slice(&self.num);
        for (a, d) in num.iter_mut().zip(&self.den) {
            *a += c * d;
        }
        // same poles, so stability is preserved
        let first_nonzero = num.iter().position(|&c| c != 0.0);
        let num = match first_nonzero {
            Some(i) => num[i..].to_vec(),
            None => vec![0.0],
        };
        Self {
            num,
            den: self.den.clone(),
        }
    }

    /// Controllable canonical realization.
    pub fn realize(&self) -> StateSpaceRealization {
        let n = self.order();
        let mut padded = vec![0.0; n + 1 - self.num.len()];
        padded.extend_from_slice(&self.num);
        let d = padded[0];
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        let mut c = DVector::<f64>::zeros(n);
        if n > 0 {
            b[0] = 1.0;
            for j in 0..n {
                a[(0, j)] = -self.den[j + 1];
                c[j] = padded[j + 1] - d * self.den[j + 1];
            }
            for i in 1..n {
                a[(i, i - 1)] = 1.0;
            }
        }
        StateSpaceRealization { a, b, c, d }
    }

    /// `C(H_T) U_T` for one period of a `T`-periodic input.
    pub fn periodic_response(&self, u: &PeriodicSignal) -> Result<PeriodicSignal, LtiError> {
        let h = self.realize().impulse_tail_sums(u.period())?;
        Ok(PeriodicSignal {
            values: cyclic_convolve(&h, u.values()),
        })
    }
}

fn horner(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// State-space realization `x+ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceRealization {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl StateSpaceRealization {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, d: f64) -> Self {
        assert!(a.is_square(), "A must be square");
        assert_eq!(a.nrows(), b.len(), "B must have one entry per state");
        assert_eq!(a.nrows(), c.len(), "C must have one entry per state");
        Self { a, b, c, d }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    /// `C (zI - A)^{-1} B + D` at `z = e^{j omega}`.
    pub fn freq_response(&self, omega: f64) -> Complex64 {
        let n = self.states();
        let d = Complex64::new(self.d, 0.0);
        if n == 0 {
            return d;
        }
        let z = Complex64::from_polar(1.0, omega);
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let rhs = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m
            .lu()
            .solve(&rhs)
            .expect("zI - A is invertible on the unit circle for a stable realization");
        self.c
            .iter()
            .zip(x.iter())
            .fold(d, |acc, (&ci, &xi)| acc + xi * ci)
    }

    /// Folded impulse response `h_i = sum_{l >= 0} g_{i + lT}` for `i = 0..T`.
    pub fn impulse_tail_sums(&self, period: usize) -> Result<Vec<f64>, LtiError> {
        assert!(period >= 1, "period must be at least 1");
        let n = self.states();
        let mut h = vec![0.0; period];
        h[0] = self.d;
        if n == 0 {
            return Ok(h);
        }
        let a_t = matrix_power(&self.a, period);
        let m = DMatrix::<f64>::identity(n, n) - a_t;
        let w = solve_checked(m, &self.b)?;
        // w_i = A^i (I - A^T)^{-1} B, h_i = C w_{i-1}, h_0 += C w_{T-1}
        let mut w = w;
        for slot in h.iter_mut().skip(1) {
            *slot = self.c.dot(&w);
            w = &self.a * w;
        }
        h[0] += self.c.dot(&w);
        Ok(h)
    }
}

/// Dense LU solve that reports near-singular pivots instead of returning garbage.
pub(crate) fn solve_checked(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, LtiError> {
    let scale = m.amax().max(1.0);
    let lu = m.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().map(|p| p.abs()).fold(f64::INFINITY, f64::min);
    if min_pivot.is_nan() || min_pivot <= SINGULAR_PIVOT * scale {
        return Err(LtiError::SingularMatrix);
    }
    lu.solve(rhs).ok_or(LtiError::SingularMatrix)
}

/// `A^k` by repeated squaring.
pub fn matrix_power(a: &DMatrix<f64>, mut k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Largest eigenvalue magnitude; 0 for an empty matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Circulant matrix whose first column is `h` and whose later columns are
/// successive cyclic down-shifts.
pub fn circulant(h: &[f64]) -> DMatrix<f64> {
    let t = h.len();
    assert!(t >= 1, "circulant of an empty sequence");
    DMatrix::from_fn(t, t, |r, c| h[(r + t - c) % t])
}

/// `y_k = sum_i h_{(k - i) mod T} u_i`.
pub fn cyclic_convolve(h: &[f64], u: &[f64]) -> Vec<f64> {
    let t = h.len();
    assert_eq!(t, u.len(), "kernel and signal must share the period");
    (0..t)
        .map(|k| (0..t).map(|i| h[(k + t - i) % t] * u[i]).sum())
        .collect()
}

/// Frequency `omega = alpha pi / beta` with its cycle length.
///
/// The period is `2 beta` for odd `alpha` and `beta` for even `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RationalFrequency {
    alpha: u32,
    beta: u32,
    omega: f64,
    period: usize,
}

impl RationalFrequency {
    pub fn new(alpha: u32, beta: u32) -> Result<Self, LtiError> {
        if alpha == 0 || alpha >= beta || gcd(alpha, beta) != 1 {
            return Err(LtiError::InvalidFrequency { alpha, beta });
        }
        let period = if alpha % 2 == 1 {
            2 * beta as usize
        } else {
            beta as usize
        };
        Ok(Self {
            alpha,
            beta,
            omega: alpha as f64 * PI / beta as f64,
            period,
        })
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn alpha_is_even(&self) -> bool {
        self.alpha.is_multiple_of(2)
    }

    /// `V_T = [1, e^{j omega}, ..., e^{j omega (T-1)}]`.
    pub fn phasor(&self) -> Vec<Complex64> {
        // alpha * i is reduced mod 2 beta so the angle stays exact for long periods
        let two_beta = 2 * self.beta as usize;
        (0..self.period)
            .map(|i| {
                let m = (self.alpha as usize * i) % two_beta;
                Complex64::from_polar(1.0, m as f64 * PI / self.beta as f64)
            })
            .collect()
    }
}

pub fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// One period of a periodic real sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PeriodicSignal {
    values: Vec<f64>,
}

impl PeriodicSignal {
    pub fn new(values: Vec<f64>) -> Result<Self, LtiError> {
        if values.is_empty() {
            return Err(LtiError::EmptySignal);
        }
        Ok(Self { values })
    }

    pub fn constant(value: f64, period: usize) -> Result<Self, LtiError> {
        Self::new(vec![value; period])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn period(&self) -> usize {
        self.values.len()
    }

    /// Sample at any integer time, wrapping modulo the period.
    pub fn at(&self, k: usize) -> f64 {
        self.values[k % self.values.len()]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for PeriodicSignal {
    type Error = LtiError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<PeriodicSignal> for Vec<f64> {
    fn from(s: PeriodicSignal) -> Self {
        s.values
    }
}
