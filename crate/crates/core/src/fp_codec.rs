//! Bit-level view of binary64 values.
//!
//! Both perturbation backends sit on top of this module: the Monte Carlo
//! backend needs the exponent of a value to scale its noise, and the
//! reduced-precision emulator needs correctly rounded significand
//! truncation plus exponent-range checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

const SIGN_MASK: u64 = 1 << 63;
const EXP_MASK: u64 = 0x7ff << 52;
const MANT_MASK: u64 = (1 << 52) - 1;
const EXP_BIAS: i32 = 1023;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpClass {
    Zero,
    Subnormal,
    Normal,
    Infinity,
    Nan,
}

/// Lossless field decomposition of a binary64 value.
///
/// For normal values `value = significand * 2^(exponent - 52)` with the
/// implicit bit included in `significand`. Subnormals keep their raw
/// significand (`value = significand * 2^-1074`) and report the exponent of
/// their leading set bit. NaNs carry their payload in `significand`; zero and
/// infinity have both numeric fields set to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpDecomposition {
    pub sign: Sign,
    pub class: FpClass,
    pub exponent: i32,
    pub significand: u64,
}

pub fn decompose(x: f64) -> FpDecomposition {
    let bits = x.to_bits();
    let sign = if bits & SIGN_MASK != 0 {
        Sign::Negative
    } else {
        Sign::Positive
    };
    let biased = ((bits & EXP_MASK) >> 52) as i32;
    let mant = bits & MANT_MASK;
    let (class, exponent, significand) = match (biased, mant) {
        (0, 0) => (FpClass::Zero, 0, 0),
        (0, m) => (FpClass::Subnormal, -1074 + (63 - m.leading_zeros() as i32), m),
        (0x7ff, 0) => (FpClass::Infinity, 0, 0),
        (0x7ff, m) => (FpClass::Nan, 0, m),
        (e, m) => (FpClass::Normal, e - EXP_BIAS, m | (1 << 52)),
    };
    FpDecomposition {
        sign,
        class,
        exponent,
        significand,
    }
}

impl FpDecomposition {
    pub fn recompose(&self) -> f64 {
        let sign = match self.sign {
            Sign::Positive => 0,
            Sign::Negative => SIGN_MASK,
        };
        let body = match self.class {
            FpClass::Zero => 0,
            FpClass::Subnormal => self.significand & MANT_MASK,
            FpClass::Normal => {
                (((self.exponent + EXP_BIAS) as u64) << 52) | (self.significand & MANT_MASK)
            }
            FpClass::Infinity => EXP_MASK,
            FpClass::Nan => EXP_MASK | (self.significand & MANT_MASK),
        };
        f64::from_bits(sign | body)
    }
}

/// Unbiased exponent `e` with `2^e <= |x| < 2^(e+1)`, or `None` for zero,
/// infinities and NaN.
#[inline]
pub fn exponent_of(x: f64) -> Option<i32> {
    let bits = x.to_bits();
    let biased = ((bits & EXP_MASK) >> 52) as i32;
    match biased {
        0x7ff => None,
        0 => {
            let m = bits & MANT_MASK;
            (m != 0).then(|| -1074 + (63 - m.leading_zeros() as i32))
        }
        e => Some(e - EXP_BIAS),
    }
}

/// `2^k` as a binary64, saturating to 0 or infinity outside the range.
#[inline]
pub fn exp2i(k: i32) -> f64 {
    match k {
        1024.. => f64::INFINITY,
        -1022..=1023 => f64::from_bits(((k + EXP_BIAS) as u64) << 52),
        -1074..=-1023 => f64::from_bits(1 << (k + 1074)),
        _ => 0.0,
    }
}

/// `x * 2^k` without intermediate overflow or premature underflow.
#[inline]
pub fn ldexp(x: f64, k: i32) -> f64 {
    if (-1022..=1023).contains(&k) {
        x * exp2i(k)
    } else if k < 0 {
        ldexp(x * exp2i(-1000), k + 1000)
    } else {
        ldexp(x * exp2i(1000), k - 1000)
    }
}

/// Round `x` to the nearest binary64 value whose significand fits in
/// `precision` bits, ties to even. The exponent range is left untouched, so
/// a carry out of the largest finite value produces infinity.
///
/// # Panics
///
/// If `precision` is outside `1..=53`.
#[inline]
pub fn round_to_precision(x: f64, precision: u32) -> f64 {
    assert!(
        (1..=53).contains(&precision),
        "precision {precision} outside 1..=53"
    );
    let bits = x.to_bits();
    let magnitude = bits & !SIGN_MASK;
    if magnitude == 0 || magnitude >= EXP_MASK {
        return x;
    }
    let width = if magnitude & EXP_MASK != 0 {
        53
    } else {
        64 - magnitude.leading_zeros()
    };
    if width <= precision {
        return x;
    }
    let shift = width - precision;
    let half = 1u64 << (shift - 1);
    let lsb = (magnitude >> shift) & 1;
    // Adding `half - 1 + lsb` rounds half-way cases toward the even
    // neighbour; a carry into the exponent field is a valid renormalisation.
    let rounded = (magnitude + half - 1 + lsb) & !((1u64 << shift) - 1);
    f64::from_bits(rounded | (bits & SIGN_MASK))
}

/// Outcome of checking a value against a narrower exponent range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeCheck {
    InRange(f64),
    /// The value's exponent exceeds the format's `emax`; carries the value.
    Overflow(f64),
    /// The value's exponent is below `emin`; carries the flushed signed zero.
    Underflow(f64),
}

/// Largest unbiased exponent of a format with `exponent_bits` exponent bits.
#[inline]
pub fn emax(exponent_bits: u32) -> i32 {
    (1 << (exponent_bits - 1)) - 1
}

/// Smallest normal unbiased exponent of a format with `exponent_bits` bits.
#[inline]
pub fn emin(exponent_bits: u32) -> i32 {
    1 - emax(exponent_bits)
}

/// Check `x` against the exponent range of a format with `exponent_bits`
/// exponent bits. Subnormals of the target format are not emulated: values
/// below `emin` flush to zero. With 11 bits the native binary64 range
/// (subnormals included) is kept as is. Zero, infinities and NaN are always
/// in range.
///
/// # Panics
///
/// If `exponent_bits` is outside `1..=11`.
#[inline]
pub fn clamp_exponent(x: f64, exponent_bits: u32) -> RangeCheck {
    assert!(
        (1..=11).contains(&exponent_bits),
        "exponent bits {exponent_bits} outside 1..=11"
    );
    if exponent_bits == 11 {
        return RangeCheck::InRange(x);
    }
    match exponent_of(x) {
        None => RangeCheck::InRange(x),
        Some(e) if e > emax(exponent_bits) => RangeCheck::Overflow(x),
        Some(e) if e < emin(exponent_bits) => RangeCheck::Underflow(0.0f64.copysign(x)),
        Some(_) => RangeCheck::InRange(x),
    }
}

/// A binary floating-point format described by its significand length
/// (implicit bit included) and exponent width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FloatFormat {
    pub precision_bits: u32,
    pub exponent_bits: u32,
}

impl FloatFormat {
    pub const BINARY64: FloatFormat = FloatFormat::raw(53, 11);
    pub const BINARY32: FloatFormat = FloatFormat::raw(24, 8);
    pub const BINARY16: FloatFormat = FloatFormat::raw(11, 5);
    pub const BFLOAT16: FloatFormat = FloatFormat::raw(8, 8);
    pub const BFLOAT8: FloatFormat = FloatFormat::raw(3, 5);

    /// The reduced formats swept by the format comparison, widest first.
    pub const REDUCED: [(&'static str, FloatFormat); 4] = [
        ("binary32", FloatFormat::BINARY32),
        ("binary16", FloatFormat::BINARY16),
        ("bfloat16", FloatFormat::BFLOAT16),
        ("bfloat8", FloatFormat::BFLOAT8),
    ];

    const fn raw(precision_bits: u32, exponent_bits: u32) -> Self {
        FloatFormat {
            precision_bits,
            exponent_bits,
        }
    }

    pub fn new(precision_bits: u32, exponent_bits: u32) -> Result<Self, Error> {
        if !(1..=53).contains(&precision_bits) {
            return Err(Error::InvalidFormat(format!(
                "precision {precision_bits} outside 1..=53"
            )));
        }
        if !(1..=11).contains(&exponent_bits) {
            return Err(Error::InvalidFormat(format!(
                "exponent bits {exponent_bits} outside 1..=11"
            )));
        }
        Ok(Self::raw(precision_bits, exponent_bits))
    }

    pub fn name(&self) -> Option<&'static str> {
        match *self {
            FloatFormat::BINARY64 => Some("binary64"),
            FloatFormat::BINARY32 => Some("binary32"),
            FloatFormat::BINARY16 => Some("binary16"),
            FloatFormat::BFLOAT16 => Some("bfloat16"),
            FloatFormat::BFLOAT8 => Some("bfloat8"),
            _ => None,
        }
    }

    pub fn emax(&self) -> i32 {
        emax(self.exponent_bits)
    }

    pub fn emin(&self) -> i32 {
        emin(self.exponent_bits)
    }

    /// Round then range-check `x` for this format.
    pub fn round(&self, x: f64) -> RangeCheck {
        clamp_exponent(round_to_precision(x, self.precision_bits), self.exponent_bits)
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(name) => f.write_str(name),
            None => write!(f, "({},{})", self.precision_bits, self.exponent_bits),
        }
    }
}

impl FromStr for FloatFormat {
    type Err = Error;

    /// Accepts a format name (`binary32`, `fp16`, `bf16`, ...) or an explicit
    /// `precision,exponent` pair such as `11,5` or `(11,5)`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let lower = s.trim().to_ascii_lowercase();
        let named = match lower.as_str() {
            "binary64" | "double" | "fp64" | "f64" => Some(FloatFormat::BINARY64),
            "binary32" | "single" | "float32" | "fp32" | "f32" => Some(FloatFormat::BINARY32),
            "binary16" | "half" | "float16" | "fp16" | "f16" => Some(FloatFormat::BINARY16),
            "bfloat16" | "bf16" => Some(FloatFormat::BFLOAT16),
            "bfloat8" | "bf8" => Some(FloatFormat::BFLOAT8),
            _ => None,
        };
        if let Some(fmt) = named {
            return Ok(fmt);
        }
        let pair = lower.trim_start_matches('(').trim_end_matches(')');
        let (p, e) = pair
            .split_once(',')
            .ok_or_else(|| Error::InvalidFormat(format!("unrecognised format `{s}`")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidFormat(format!("unrecognised format `{s}`")))
        };
        FloatFormat::new(parse(p)?, parse(e)?)
    }
}
