//! The pluggable arithmetic layer every model computation goes through.

use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::mca::McaContext;
use crate::vprec::{EventCounters, VprecContext};

/// Binary arithmetic operations routed through a context. Fused
/// multiply-add has its own entry points since it takes three operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => a / b,
        }
    }
}

/// Declared working precision of an operation: which native format the
/// source program computes it in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    /// Round a binary64 value to the native format of this class.
    #[inline]
    pub fn round_native(self, x: f64) -> f64 {
        match self {
            Precision::Single => x as f32 as f64,
            Precision::Double => x,
        }
    }
}

/// Error-free transformation `a + b = s + err` (Knuth's TwoSum).
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    if !s.is_finite() {
        return (s, 0.0);
    }
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Error-free transformation `a * b = p + err`, exact unless the product
/// underflows.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    if !p.is_finite() {
        return (p, 0.0);
    }
    (p, a.mul_add(b, -p))
}

/// The rounded binary64 result of `a op b` together with its rounding error.
/// The error term is exact for `+`, `-` and `*`; for `/` it is the exact
/// remainder divided by `b`, which has the correct sign and is accurate to
/// one rounding.
#[inline]
pub fn exact_parts(op: Op, a: f64, b: f64) -> (f64, f64) {
    match op {
        Op::Add => two_sum(a, b),
        Op::Sub => two_sum(a, -b),
        Op::Mul => two_prod(a, b),
        Op::Div => {
            let q = a / b;
            if !q.is_finite() || q == 0.0 {
                return (q, 0.0);
            }
            let rem = (-q).mul_add(b, a);
            (q, rem / b)
        }
    }
}

/// `a * b + c` as a rounded binary64 value plus an approximation of the
/// rounding error. The error term is exact whenever the product `a * b` is
/// representable, which holds for binary32-valued operands.
#[inline]
pub fn fma_parts(a: f64, b: f64, c: f64) -> (f64, f64) {
    let (p, pe) = two_prod(a, b);
    if pe == 0.0 {
        return two_sum(p, c);
    }
    let r = a.mul_add(b, c);
    if !r.is_finite() {
        return (r, 0.0);
    }
    let (s, se) = two_sum(p, c);
    (r, (s - r) + se + pe)
}

/// Collapse `hi + lo` to a binary64 value using round-to-odd: the result is
/// `hi` when `lo` is zero, otherwise the neighbour of `hi` toward `lo` that
/// has an odd significand. Rounding this to `p <= 51` bits is equivalent to
/// correctly rounding the exact value `hi + lo`.
#[inline]
pub fn round_to_odd(hi: f64, lo: f64) -> f64 {
    if lo == 0.0 || !hi.is_finite() || hi == 0.0 {
        return hi;
    }
    let bits = hi.to_bits();
    if bits & 1 == 1 {
        return hi;
    }
    let same_direction = (hi > 0.0) == (lo > 0.0);
    f64::from_bits(if same_direction { bits + 1 } else { bits - 1 })
}

/// A backend for scalar floating-point arithmetic.
///
/// Values are always carried as `f64`; operations declared as
/// [`Precision::Single`] must return values representable in the backend's
/// single-class format.
pub trait Arithmetic {
    fn binop(&mut self, op: Op, a: f64, b: f64, prec: Precision) -> Result<f64, FormatError>;

    fn fma(&mut self, a: f64, b: f64, c: f64, prec: Precision) -> Result<f64, FormatError>;

    /// Bring a constant (weight, input) into the working format of `prec`.
    fn load(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError>;

    /// `e^x`, evaluated natively and delivered in the working format.
    fn exp(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError>;

    /// Overflow/underflow events observed so far.
    fn events(&self) -> EventCounters {
        EventCounters::default()
    }

    #[inline]
    fn add(&mut self, a: f64, b: f64, prec: Precision) -> Result<f64, FormatError> {
        self.binop(Op::Add, a, b, prec)
    }

    #[inline]
    fn sub(&mut self, a: f64, b: f64, prec: Precision) -> Result<f64, FormatError> {
        self.binop(Op::Sub, a, b, prec)
    }

    #[inline]
    fn mul(&mut self, a: f64, b: f64, prec: Precision) -> Result<f64, FormatError> {
        self.binop(Op::Mul, a, b, prec)
    }

    #[inline]
    fn div(&mut self, a: f64, b: f64, prec: Precision) -> Result<f64, FormatError> {
        self.binop(Op::Div, a, b, prec)
    }

    /// Comparisons are exact in every backend.
    #[inline]
    fn max(&mut self, a: f64, b: f64) -> f64 {
        if b > a {
            b
        } else {
            a
        }
    }
}

/// Plain IEEE-754 arithmetic in the declared native format.
#[derive(Debug, Clone, Copy, Default)]
pub struct IeeeContext;

impl Arithmetic for IeeeContext {
    #[inline]
    fn binop(&mut self, op: Op, a: f64, b: f64, prec: Precision) -> Result<f64, FormatError> {
        // binary64 results of binary32 operands round correctly to binary32
        // for the four basic operations.
        Ok(prec.round_native(op.apply(a, b)))
    }

    #[inline]
    fn fma(&mut self, a: f64, b: f64, c: f64, prec: Precision) -> Result<f64, FormatError> {
        Ok(match prec {
            Precision::Single => (a as f32).mul_add(b as f32, c as f32) as f64,
            Precision::Double => a.mul_add(b, c),
        })
    }

    #[inline]
    fn load(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError> {
        Ok(prec.round_native(x))
    }

    #[inline]
    fn exp(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError> {
        Ok(prec.round_native(x.exp()))
    }
}

/// Any of the three backends behind one type.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ArithmeticContext {
    Ieee(IeeeContext),
    Mca(McaContext),
    Vprec(VprecContext),
}

impl Arithmetic for ArithmeticContext {
    #[inline]
    fn binop(&mut self, op: Op, a: f64, b: f64, prec: Precision) -> Result<f64, FormatError> {
        match self {
            ArithmeticContext::Ieee(c) => c.binop(op, a, b, prec),
            ArithmeticContext::Mca(c) => c.binop(op, a, b, prec),
            ArithmeticContext::Vprec(c) => c.binop(op, a, b, prec),
        }
    }

    #[inline]
    fn fma(&mut self, a: f64, b: f64, c: f64, prec: Precision) -> Result<f64, FormatError> {
        match self {
            ArithmeticContext::Ieee(ctx) => ctx.fma(a, b, c, prec),
            ArithmeticContext::Mca(ctx) => ctx.fma(a, b, c, prec),
            ArithmeticContext::Vprec(ctx) => ctx.fma(a, b, c, prec),
        }
    }

    #[inline]
    fn load(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError> {
        match self {
            ArithmeticContext::Ieee(c) => c.load(x, prec),
            ArithmeticContext::Mca(c) => c.load(x, prec),
            ArithmeticContext::Vprec(c) => c.load(x, prec),
        }
    }

    #[inline]
    fn exp(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError> {
        match self {
            ArithmeticContext::Ieee(c) => c.exp(x, prec),
            ArithmeticContext::Mca(c) => c.exp(x, prec),
            ArithmeticContext::Vprec(c) => c.exp(x, prec),
        }
    }

    fn events(&self) -> EventCounters {
        match self {
            ArithmeticContext::Ieee(c) => c.events(),
            ArithmeticContext::Mca(c) => c.events(),
            ArithmeticContext::Vprec(c) => c.events(),
        }
    }
}
