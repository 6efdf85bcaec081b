//! Scalar interval arithmetic for bounding Hessian entries over a box.
//!
//! Plain floating point, no directed rounding. Division goes through
//! [`ScalarRange::recip`] so there is a single place that checks for a
//! range straddling zero.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRange {
    lo: f64,
    hi: f64,
}

impl ScalarRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidArgument(format!("invalid scalar range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_subset_of(&self, other: &ScalarRange) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    /// `[1/hi, 1/lo]`; fails when the range touches or straddles zero.
    pub fn recip(self) -> Result<Self> {
        if self.lo <= 0.0 && self.hi >= 0.0 {
            return Err(Error::Singularity(format!(
                "reciprocal of range [{}, {}] containing zero",
                self.lo, self.hi
            )));
        }
        Ok(Self {
            lo: 1.0 / self.hi,
            hi: 1.0 / self.lo,
        })
    }

    /// `max(|lo|, |hi|)`.
    pub fn abs_sup(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn scale(self, k: f64) -> Self {
        self * ScalarRange::point(k)
    }
}

impl Add for ScalarRange {
    type Output = ScalarRange;

    fn add(self, rhs: ScalarRange) -> ScalarRange {
        ScalarRange {
            lo: self.lo + rhs.lo,
            hi: self.hi + rhs.hi,
        }
    }
}

impl Sub for ScalarRange {
    type Output = ScalarRange;

    fn sub(self, rhs: ScalarRange) -> ScalarRange {
        self + (-rhs)
    }
}

impl Neg for ScalarRange {
    type Output = ScalarRange;

    fn neg(self) -> ScalarRange {
        ScalarRange {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for ScalarRange {
    type Output = ScalarRange;

    fn mul(self, rhs: ScalarRange) -> ScalarRange {
        let products = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        ScalarRange {
            lo: products.iter().copied().fold(f64::INFINITY, f64::min),
            hi: products.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}
