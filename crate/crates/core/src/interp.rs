//! Monotone interpolation of input/output data by piecewise-linear,
//! possibly multivalued nonlinearities.
//!
//! Data pairs are `(y, v)` with `v = -u`, the value the nonlinearity must take
//! at `y`. Sorted data is joined by straight segments; repeated `y` values turn
//! into vertical steps (an interval-valued point); outside the data the output
//! is held constant.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::lti::{PeriodicSignal, RationalFrequency};
use crate::precision::Real;

/// Relative width of the band in which `y` values count as repeats.
pub const CLUSTER_REL: f64 = 1e-8;

/// Relative tolerance on `(y_i - y_l)(v_i - v_l) >= 0`.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Relative slack allowed on a finite slope bound.
pub const SLOPE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpError {
    #[error("no data to interpolate")]
    EmptyData,
    #[error("data is not monotone: pairs {i} and {l} give (y_i - y_l)(v_i - v_l) = {product:e}")]
    NotMonotone { i: usize, l: usize, product: f64 },
    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),
    #[error("the interpolated curve does not meet the line through (0,0) and ({dc}, -1) within the data span")]
    NoIntersection { dc: f64 },
    #[error("shifted nonlinearity misses the origin by {residual:e}")]
    ShiftCheckFailed { residual: f64 },
    #[error("slope bound must be positive and finite, got {0}")]
    InvalidSlope(f64),
    #[error("loop-transformed data has chord slope {max_slope} above the bound {k}")]
    SlopeViolation { max_slope: f64, k: f64 },
}

/// Upper slope limit of a nonlinearity class: `[0, k]` or monotone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeLimit {
    Finite(f64),
    Infinite,
}

impl SlopeLimit {
    pub fn finite(&self) -> Option<f64> {
        match self {
            SlopeLimit::Finite(k) => Some(*k),
            SlopeLimit::Infinite => None,
        }
    }
}

impl fmt::Display for SlopeLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlopeLimit::Finite(k) => write!(f, "{k}"),
            SlopeLimit::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for SlopeLimit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("inf") {
            return Ok(SlopeLimit::Infinite);
        }
        let k: f64 = s
            .parse()
            .map_err(|_| format!("expected a positive number or \"inf\", got {s:?}"))?;
        if !k.is_finite() || k <= 0.0 {
            return Err(format!("slope must be positive and finite, got {k}"));
        }
        Ok(SlopeLimit::Finite(k))
    }
}

impl Serialize for SlopeLimit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SlopeLimit::Finite(k) => s.serialize_f64(*k),
            SlopeLimit::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for SlopeLimit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Marker(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(k) => Ok(SlopeLimit::Finite(k)),
            Raw::Marker(m) => m.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPair {
    pub y: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSource {
    pub freq: RationalFrequency,
    #[serde(with = "crate::complex_serde")]
    pub response: Complex64,
}

/// Finite set of `(y, v)` pairs to be interpolated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataPairSet {
    pairs: Vec<DataPair>,
    source: Option<DataSource>,
}

impl DataPairSet {
    pub fn new(pairs: Vec<DataPair>) -> Self {
        Self {
            pairs,
            source: None,
        }
    }

    pub fn from_xy(points: &[(f64, f64)]) -> Self {
        Self::new(points.iter().map(|&(y, v)| DataPair { y, v }).collect())
    }

    /// Pairs `(y_k, -u_k)` from one period of plant output and input.
    pub fn from_signals(y: &PeriodicSignal, u: &PeriodicSignal) -> Self {
        assert_eq!(y.period(), u.period(), "signals must share the period");
        Self::new(
            y.values()
                .iter()
                .zip(u.values())
                .map(|(&y, &u)| DataPair { y, v: -u })
                .collect(),
        )
    }

    pub fn with_source(mut self, freq: RationalFrequency, response: Complex64) -> Self {
        self.source = Some(DataSource { freq, response });
        self
    }

    pub fn pairs(&self) -> &[DataPair] {
        &self.pairs
    }

    pub fn source(&self) -> Option<&DataSource> {
        self.source.as_ref()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Adds `xi` to the plant input and `xi * dc` to its output.
    pub fn shifted(&self, xi: f64, dc: f64) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| DataPair {
                    y: p.y + xi * dc,
                    v: p.v - xi,
                })
                .collect(),
            source: self.source.clone(),
        }
    }

    fn scales(&self) -> (f64, f64) {
        self.pairs.iter().fold((0.0, 0.0), |(sy, sv), p| {
            (f64::max(sy, p.y.abs()), f64::max(sv, p.v.abs()))
        })
    }

    fn cluster_eps(&self) -> f64 {
        CLUSTER_REL * self.scales().0.max(1.0)
    }

    fn first_violation(&self) -> Option<InterpError> {
        let (sy, sv) = self.scales();
        let tol = MONOTONE_TOL * sy.max(sv).powi(2);
        for (i, a) in self.pairs.iter().enumerate() {
            for (l, b) in self.pairs.iter().enumerate().skip(i + 1) {
                let product = (a.y - b.y) * (a.v - b.v);
                if product < -tol {
                    return Some(InterpError::NotMonotone { i, l, product });
                }
            }
        }
        None
    }
}

/// `(y_i - y_l)(u_i - u_l) <= 0` for every pair, up to rounding.
pub fn lemma2_check(data: &DataPairSet) -> bool {
    data.first_violation().is_none()
}

/// Closed output interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        self.distance(v) <= tol
    }

    pub fn distance(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            0.0
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub y: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Breakpoint {
    fn is_degenerate(&self) -> bool {
        self.v_lo == self.v_hi
    }
}

#[derive(Serialize, Deserialize)]
struct RawNonlinearity {
    odd: bool,
    slope_bound: SlopeLimit,
    breakpoints: Vec<Breakpoint>,
}

/// Piecewise-linear monotone nonlinearity with interval-valued breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNonlinearity", into = "RawNonlinearity")]
pub struct PiecewiseNonlinearity {
    breakpoints: Vec<Breakpoint>,
    odd: bool,
    slope_bound: SlopeLimit,
}

impl TryFrom<RawNonlinearity> for PiecewiseNonlinearity {
    type Error = InterpError;

    fn try_from(raw: RawNonlinearity) -> Result<Self, Self::Error> {
        Self::new(raw.breakpoints, raw.odd, raw.slope_bound)
    }
}

impl From<PiecewiseNonlinearity> for RawNonlinearity {
    fn from(p: PiecewiseNonlinearity) -> Self {
        RawNonlinearity {
            odd: p.odd,
            slope_bound: p.slope_bound,
            breakpoints: p.breakpoints,
        }
    }
}

fn invalid(msg: impl Into<String>) -> InterpError {
    InterpError::InvalidNonlinearity(msg.into())
}

impl PiecewiseNonlinearity {
    pub fn new(
        breakpoints: Vec<Breakpoint>,
        odd: bool,
        slope_bound: SlopeLimit,
    ) -> Result<Self, InterpError> {
        if breakpoints.is_empty() {
            return Err(invalid("no breakpoints"));
        }
        for (i, b) in breakpoints.iter().enumerate() {
            if !(b.y.is_finite() && b.v_lo.is_finite() && b.v_hi.is_finite()) {
                return Err(invalid(format!("breakpoint {i} is not finite")));
            }
            if b.v_lo > b.v_hi {
                return Err(invalid(format!("breakpoint {i} has v_lo > v_hi")));
            }
        }
        for (i, w) in breakpoints.windows(2).enumerate() {
            if w[0].y >= w[1].y {
                return Err(invalid(format!("y is not strictly increasing at {}", i + 1)));
            }
            if w[0].v_hi > w[1].v_lo {
                return Err(invalid(format!("output decreases between {i} and {}", i + 1)));
            }
        }
        let phi = Self {
            breakpoints,
            odd,
            slope_bound,
        };
        if let SlopeLimit::Finite(k) = slope_bound {
            if !(k > 0.0 && k.is_finite()) {
                return Err(invalid(format!("slope bound {k} is not positive")));
            }
            if !phi.is_single_valued() {
                return Err(invalid("a finite slope bound requires a single-valued function"));
            }
            let max = phi.max_slope();
            if max > k * (1.0 + SLOPE_REL_TOL) {
                return Err(invalid(format!("chord slope {max} exceeds the bound {k}")));
            }
        }
        if odd && !phi.is_symmetric() {
            return Err(invalid("marked odd but breakpoints are not point-symmetric"));
        }
        Ok(phi)
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn is_odd(&self) -> bool {
        self.odd
    }

    pub fn slope_bound(&self) -> SlopeLimit {
        self.slope_bound
    }

    pub fn is_single_valued(&self) -> bool {
        self.breakpoints.iter().all(Breakpoint::is_degenerate)
    }

    fn y_scale(&self) -> f64 {
        self.breakpoints
            .iter()
            .map(|b| b.y.abs())
            .fold(1.0, f64::max)
    }

    fn v_scale(&self) -> f64 {
        self.breakpoints
            .iter()
            .map(|b| b.v_lo.abs().max(b.v_hi.abs()))
            .fold(1.0, f64::max)
    }

    fn is_symmetric(&self) -> bool {
        let (ty, tv) = (CLUSTER_REL * self.y_scale(), CLUSTER_REL * self.v_scale());
        let n = self.breakpoints.len();
        (0..n).all(|i| {
            let (a, b) = (&self.breakpoints[i], &self.breakpoints[n - 1 - i]);
            (a.y + b.y).abs() <= ty && (a.v_lo + b.v_hi).abs() <= tv && (a.v_hi + b.v_lo).abs() <= tv
        })
    }

    /// Slopes of the segments joining consecutive breakpoints.
    pub fn segment_slopes(&self) -> Vec<f64> {
        self.breakpoints
            .windows(2)
            .map(|w| (w[1].v_lo - w[0].v_hi) / (w[1].y - w[0].y))
            .collect()
    }

    /// Largest chord slope; infinite when some breakpoint is a vertical step.
    pub fn max_slope(&self) -> f64 {
        if !self.is_single_valued() {
            return f64::INFINITY;
        }
        self.segment_slopes().into_iter().fold(0.0, f64::max)
    }

    /// Replaces the slope bound, collapsing breakpoint intervals that are
    /// numerically points.
    pub fn with_slope_bound(self, k: f64) -> Result<Self, InterpError> {
        let tol = 1e-12 * self.v_scale();
        let mut breakpoints = self.breakpoints;
        for b in &mut breakpoints {
            if b.v_hi - b.v_lo > tol {
                return Err(InterpError::SlopeViolation {
                    max_slope: f64::INFINITY,
                    k,
                });
            }
            let mid = 0.5 * (b.v_lo + b.v_hi);
            b.v_lo = mid;
            b.v_hi = mid;
        }
        let relaxed = Self {
            breakpoints,
            odd: self.odd,
            slope_bound: SlopeLimit::Infinite,
        };
        let max_slope = relaxed.max_slope();
        if max_slope > k * (1.0 + SLOPE_REL_TOL) {
            return Err(InterpError::SlopeViolation { max_slope, k });
        }
        Self::new(relaxed.breakpoints, relaxed.odd, SlopeLimit::Finite(k))
    }

    /// Output set at `y`.
    ///
    /// Queries within the repeat band of an interval-valued breakpoint return
    /// that breakpoint's interval.
    pub fn evaluate(&self, y: f64) -> Interval {
        let bps = &self.breakpoints;
        let n = bps.len();
        let idx = bps.partition_point(|b| b.y <= y);
        let snap = CLUSTER_REL * self.y_scale();
        let nearest = [idx.checked_sub(1), (idx < n).then_some(idx)]
            .into_iter()
            .flatten()
            .filter(|&i| !bps[i].is_degenerate() && (bps[i].y - y).abs() <= snap)
            .min_by(|&a, &b| {
                (bps[a].y - y)
                    .abs()
                    .partial_cmp(&(bps[b].y - y).abs())
                    .unwrap_or(Ordering::Equal)
            });
        if let Some(i) = nearest {
            return Interval {
                lo: bps[i].v_lo,
                hi: bps[i].v_hi,
            };
        }
        if idx == 0 {
            return Interval::point(bps[0].v_lo);
        }
        let a = &bps[idx - 1];
        if a.y == y {
            return Interval {
                lo: a.v_lo,
                hi: a.v_hi,
            };
        }
        if idx == n {
            return Interval::point(a.v_hi);
        }
        let b = &bps[idx];
        let f = (y - a.y) / (b.y - a.y);
        Interval::point(a.v_hi + f * (b.v_lo - a.v_hi))
    }

    /// Value and local slope of a single-valued nonlinearity, in any scalar type.
    ///
    /// At a breakpoint the slope of the segment to its right is reported.
    pub fn eval_single<R: Real>(&self, y: R) -> (R, f64) {
        let bps = &self.breakpoints;
        let n = bps.len();
        let idx = bps.partition_point(|b| R::from_f64(b.y) <= y);
        if idx == 0 {
            return (R::from_f64(bps[0].v_lo), 0.0);
        }
        if idx == n {
            return (R::from_f64(bps[n - 1].v_hi), 0.0);
        }
        let (a, b) = (&bps[idx - 1], &bps[idx]);
        let dy = R::from_f64(b.y) - R::from_f64(a.y);
        let dv = R::from_f64(b.v_lo) - R::from_f64(a.v_hi);
        let value = R::from_f64(a.v_hi) + (y - R::from_f64(a.y)) * dv / dy;
        (value, (b.v_lo - a.v_hi) / (b.y - a.y))
    }

    /// Slides every breakpoint by `eta` in `y` along its less steep adjacent
    /// piece, ties going away from the origin; a breakpoint at the origin
    /// stays put.
    ///
    /// Former breakpoints end up strictly inside a linear piece, within
    /// `O(eta^2)` of the new graph. Monotonicity and odd symmetry are kept;
    /// segment slopes change by a relative `O(eta / gap)`.
    pub fn offset_breakpoints(&self, eta: f64) -> Result<Self, InterpError> {
        if !self.is_single_valued() {
            return Err(invalid("only single-valued nonlinearities can be offset"));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(invalid(format!("offset {eta} must be nonnegative")));
        }
        let bps = &self.breakpoints;
        let n = bps.len();
        let slope = |i: usize, j: usize| (bps[j].v_lo - bps[i].v_hi) / (bps[j].y - bps[i].y);
        let moved = (0..n)
            .map(|i| {
                let b = bps[i];
                if b.y == 0.0 {
                    return b;
                }
                let left = if i > 0 { slope(i - 1, i) } else { 0.0 };
                let right = if i + 1 < n { slope(i, i + 1) } else { 0.0 };
                let along_left = left < right || (left == right && b.y > 0.0);
                let (dy, s) = if along_left { (eta, left) } else { (-eta, right) };
                let v = b.v_lo + s * dy;
                Breakpoint { y: b.y + dy, v_lo: v, v_hi: v }
            })
            .collect();
        Self::new(moved, self.odd, self.slope_bound)
    }

    /// Smallest gap between consecutive breakpoints.
    pub fn min_gap(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .map(|w| w[1].y - w[0].y)
            .fold(f64::INFINITY, f64::min)
    }

    /// Vertices of the graph, walking vertical steps bottom to top.
    fn vertices(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.breakpoints.len());
        for b in &self.breakpoints {
            out.push((b.y, b.v_lo));
            if !b.is_degenerate() {
                out.push((b.y, b.v_hi));
            }
        }
        out
    }
}

/// Interpolates monotone data by the piecewise-linear function through the
/// sorted pairs, with interval outputs at repeated `y`.
///
/// If the resulting breakpoints are point-symmetric the function is
/// symmetrized exactly and marked odd.
pub fn interpolate(data: &DataPairSet) -> Result<PiecewiseNonlinearity, InterpError> {
    if data.is_empty() {
        return Err(InterpError::EmptyData);
    }
    if let Some(err) = data.first_violation() {
        return Err(err);
    }
    let eps = data.cluster_eps();
    let mut sorted = data.pairs().to_vec();
    sorted.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.v.total_cmp(&b.v)));

    let mut breakpoints: Vec<Breakpoint> = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let anchor = sorted[start].y;
        let end = start + sorted[start..].partition_point(|p| p.y - anchor <= eps);
        let cluster = &sorted[start..end];
        let y = cluster.iter().map(|p| p.y).sum::<f64>() / cluster.len() as f64;
        let v_lo = cluster.iter().map(|p| p.v).fold(f64::INFINITY, f64::min);
        let v_hi = cluster.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max);
        breakpoints.push(Breakpoint { y, v_lo, v_hi });
        start = end;
    }
    // rounding can leave adjacent steps overlapping by an ulp
    for i in 1..breakpoints.len() {
        let prev_hi = breakpoints[i - 1].v_hi;
        let b = &mut breakpoints[i];
        b.v_lo = b.v_lo.max(prev_hi);
        b.v_hi = b.v_hi.max(b.v_lo);
    }

    let candidate = PiecewiseNonlinearity {
        breakpoints,
        odd: false,
        slope_bound: SlopeLimit::Infinite,
    };
    let odd = candidate.is_symmetric();
    let breakpoints = if odd {
        symmetrize(&candidate.breakpoints)
    } else {
        candidate.breakpoints
    };
    PiecewiseNonlinearity::new(breakpoints, odd, SlopeLimit::Infinite)
}

fn symmetrize(bps: &[Breakpoint]) -> Vec<Breakpoint> {
    let n = bps.len();
    (0..n)
        .map(|i| {
            let (a, b) = (&bps[i], &bps[n - 1 - i]);
            Breakpoint {
                y: 0.5 * (a.y - b.y),
                v_lo: 0.5 * (a.v_lo - b.v_hi),
                v_hi: 0.5 * (a.v_hi - b.v_lo),
            }
        })
        .collect()
}

/// Union of the data with its reflection `(y, v) -> (-y, -v)`.
pub fn odd_append(data: &DataPairSet) -> DataPairSet {
    let eps = data.cluster_eps();
    let mut pairs: Vec<DataPair> = Vec::with_capacity(2 * data.len());
    let candidates = data.pairs().iter().copied().chain(
        data.pairs()
            .iter()
            .map(|p| DataPair { y: -p.y, v: -p.v }),
    );
    for p in candidates {
        let dup = pairs
            .iter()
            .any(|q| (q.y - p.y).abs() <= eps && (q.v - p.v).abs() <= eps);
        if !dup {
            pairs.push(p);
        }
    }
    DataPairSet {
        pairs,
        source: data.source.clone(),
    }
}

/// Shift `xi` that moves the interpolated curve through the origin along the
/// direction `(dc, -1)`.
///
/// The curve is intersected with the line `s (dc, -1)` segment by segment and
/// the intersection with the smallest `|s|` is used; `xi = -s`.
pub fn compute_shift(data: &DataPairSet, dc: f64) -> Result<f64, InterpError> {
    let phi = interpolate(data)?;
    let vertices = phi.vertices();
    let dir = (dc, -1.0);
    let on_line = |(y, v): (f64, f64)| y + dc * v;
    let line_tol = 1e-12 * (phi.y_scale() + dc.abs() * phi.v_scale());

    let mut best: Option<f64> = None;
    let mut offer = |s: f64| {
        if best.is_none_or(|b: f64| s.abs() < b.abs()) {
            best = Some(s);
        }
    };
    if vertices.len() == 1 && on_line(vertices[0]).abs() <= line_tol {
        offer(-vertices[0].1);
    }
    for w in vertices.windows(2) {
        let (p, q) = (w[0], w[1]);
        let d = (q.0 - p.0, q.1 - p.1);
        let det = d.0 + dc * d.1;
        let seg_len = d.0.hypot(d.1);
        if det.abs() <= 1e-14 * seg_len * dir.0.hypot(dir.1) {
            // parallel; collinear segments lie on the line for their whole length
            if on_line(p).abs() <= line_tol {
                let (sp, sq) = (-p.1, -q.1);
                offer(if sp * sq <= 0.0 { 0.0 } else { sp.abs().min(sq.abs()).copysign(sp) });
            }
            continue;
        }
        let t = (-p.0 - dc * p.1) / det;
        let s = (d.1 * p.0 - d.0 * p.1) / det;
        if (-1e-12..=1.0 + 1e-12).contains(&t) {
            offer(s);
        }
    }
    let s = best.ok_or(InterpError::NoIntersection { dc })?;
    let xi = if s == 0.0 { 0.0 } else { -s };

    let shifted = interpolate(&data.shifted(xi, dc))?;
    let residual = shifted.evaluate(0.0).distance(0.0);
    if residual > 1e-9 {
        return Err(InterpError::ShiftCheckFailed { residual });
    }
    Ok(xi)
}

/// Maps data for the monotone nonlinearity of `G + 1/k` back to data for a
/// nonlinearity with slope in `[0, k]` in the loop with `G`:
/// `(y~, -u) -> (y~ - u/k, -u)`.
pub fn loop_transform_data(data: &DataPairSet, k: f64) -> Result<DataPairSet, InterpError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(InterpError::InvalidSlope(k));
    }
    let out = DataPairSet {
        pairs: data
            .pairs
            .iter()
            .map(|p| DataPair {
                y: p.y + p.v / k,
                v: p.v,
            })
            .collect(),
        source: data.source.clone(),
    };
    let max_slope = interpolate(&out)?.max_slope();
    if max_slope > k * (1.0 + SLOPE_REL_TOL) {
        return Err(InterpError::SlopeViolation { max_slope, k });
    }
    Ok(out)
}
