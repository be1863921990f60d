//! Signed Q8.8 fixed point with saturating arithmetic.
//!
//! Every 16-bit write-back saturates to `[-128.0, 127.99609375]`; nothing
//! wraps. Products are formed at 32 bits and truncated by an arithmetic
//! shift. Dot products accumulate unsaturated at accumulator width and
//! saturate once on readout.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum FxpError {
    #[error("cannot quantize NaN")]
    NaN,
}

pub const FRAC_BITS: u32 = 8;
const SCALE: f64 = (1u32 << FRAC_BITS) as f64;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(transparent)]
pub struct Fxp(i16);

impl Fxp {
    pub const ZERO: Fxp = Fxp(0);
    pub const ONE: Fxp = Fxp(1 << FRAC_BITS);
    pub const MIN: Fxp = Fxp(i16::MIN);
    pub const MAX: Fxp = Fxp(i16::MAX);
    /// One least-significant bit, 1/256.
    pub const LSB: Fxp = Fxp(1);

    pub const fn from_raw(raw: i16) -> Self {
        Fxp(raw)
    }

    pub const fn raw(self) -> i16 {
        self.0
    }

    /// Saturates a wide intermediate into the 16-bit range.
    pub fn saturate(wide: i64) -> Self {
        Fxp(wide.clamp(i16::MIN as i64, i16::MAX as i64) as i16)
    }

    /// Round-half-to-even quantization of `x * 256`, saturated.
    pub fn from_real(x: f64) -> Result<Self, FxpError> {
        if x.is_nan() {
            return Err(FxpError::NaN);
        }
        let scaled = (x * SCALE).round_ties_even();
        Ok(Fxp(scaled.clamp(i16::MIN as f64, i16::MAX as f64) as i16))
    }

    pub fn to_real(self) -> f64 {
        self.0 as f64 / SCALE
    }

    pub fn saturating_add(self, rhs: Fxp) -> Fxp {
        Fxp(self.0.saturating_add(rhs.0))
    }

    pub fn saturating_sub(self, rhs: Fxp) -> Fxp {
        Fxp(self.0.saturating_sub(rhs.0))
    }

    /// 32-bit product shifted right by the fraction width (floor), saturated.
    pub fn saturating_mul(self, rhs: Fxp) -> Fxp {
        let p = self.0 as i32 * rhs.0 as i32;
        Fxp::saturate((p >> FRAC_BITS) as i64)
    }

    pub fn clamp_abs(self, bound: Fxp) -> Fxp {
        let b = bound.0.saturating_abs();
        Fxp(self.0.clamp(-b, b))
    }
}

impl Add for Fxp {
    type Output = Fxp;
    fn add(self, rhs: Fxp) -> Fxp {
        self.saturating_add(rhs)
    }
}

impl Sub for Fxp {
    type Output = Fxp;
    fn sub(self, rhs: Fxp) -> Fxp {
        self.saturating_sub(rhs)
    }
}

impl Neg for Fxp {
    type Output = Fxp;
    fn neg(self) -> Fxp {
        Fxp(self.0.saturating_neg())
    }
}

impl fmt::Debug for Fxp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fxp({:#06x} = {})", self.0 as u16, self.to_real())
    }
}

impl fmt::Display for Fxp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_real())
    }
}

/// Multiply-accumulate register holding a sum of raw products (Q16.16).
///
/// The register is 64 bits wide; for `D = 784` terms with weights in
/// `[-1, 1)` and inputs in `[0, 1]` the sum never leaves 32 bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Accumulator(i64);

impl Accumulator {
    pub const fn new() -> Self {
        Accumulator(0)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    #[inline]
    pub fn mac(self, a: Fxp, b: Fxp) -> Self {
        Accumulator(self.0 + a.0 as i64 * b.0 as i64)
    }

    /// Adds a Q8.8 term (the bias) aligned to the product scale.
    #[inline]
    pub fn add_term(self, b: Fxp) -> Self {
        Accumulator(self.0 + ((b.0 as i64) << FRAC_BITS))
    }

    /// Rescales to Q8.8 with a single final saturation.
    pub fn readout(self) -> Fxp {
        Fxp::saturate(self.0 >> FRAC_BITS)
    }

    /// Dot product of two equal-length vectors.
    pub fn dot(a: &[Fxp], b: &[Fxp]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let sum: i64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| x.0 as i64 * y.0 as i64)
            .sum();
        Accumulator(sum)
    }

    /// A real threshold expressed at accumulator scale (2^-16 units),
    /// rounded half to even. Infinite thresholds map to the extreme values.
    pub fn threshold(theta: f64) -> i64 {
        if theta == f64::NEG_INFINITY {
            i64::MIN
        } else if theta == f64::INFINITY {
            i64::MAX
        } else {
            (theta * SCALE * SCALE).round_ties_even() as i64
        }
    }
}
