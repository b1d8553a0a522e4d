//! Scalars the closed-loop simulator can run on.
//!
//! Repelling cycles amplify rounding error by their per-period expansion rate,
//! so multi-period checks run in double-double arithmetic.

use std::ops::{Add, Div, Mul, Neg, Sub};

use twofloat::TwoFloat;

pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn abs(self) -> Self {
        f64::abs(self)
    }
}

impl Real for TwoFloat {
    fn from_f64(v: f64) -> Self {
        TwoFloat::from(v)
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }

    fn abs(self) -> Self {
        TwoFloat::abs(&self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_double_keeps_bits_f64_drops() {
        let tiny = 1e-20;
        let a = <TwoFloat as Real>::from_f64(1.0) + TwoFloat::from_f64(tiny);
        let back = (a - TwoFloat::from_f64(1.0)).to_f64();
        assert!((back - tiny).abs() < 1e-30);
        assert_eq!((1.0f64 + tiny) - 1.0, 0.0);
    }
}
