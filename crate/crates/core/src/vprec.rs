//! Reduced-precision emulation inside binary64.
//!
//! Every operation is computed exactly (binary64 result plus its error
//! term), rounded once to the target significand length and then checked
//! against the target exponent range.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::arith::{exact_parts, fma_parts, round_to_odd, Arithmetic, Op, Precision};
use crate::error::FormatError;
use crate::fp_codec::{round_to_precision, FloatFormat, RangeCheck};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverflowPolicy {
    /// Abort the computation with a [`FormatError`].
    #[default]
    Signal,
    /// Replace the value with a signed infinity and carry on.
    SaturateToInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventCounters {
    pub overflow: u64,
    pub underflow: u64,
}

impl AddAssign for EventCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.overflow += rhs.overflow;
        self.underflow += rhs.underflow;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VprecConfig {
    /// Format emulated for binary64-class operations.
    pub fmt64: FloatFormat,
    /// Format emulated for binary32-class operations.
    pub fmt32: FloatFormat,
    pub overflow_policy: OverflowPolicy,
}

impl VprecConfig {
    pub fn new(fmt64: FloatFormat, fmt32: FloatFormat) -> Self {
        VprecConfig {
            fmt64,
            fmt32,
            overflow_policy: OverflowPolicy::Signal,
        }
    }

    /// Each class emulated at its own native format.
    pub fn native() -> Self {
        Self::new(FloatFormat::BINARY64, FloatFormat::BINARY32)
    }

    pub fn format_for(&self, prec: Precision) -> FloatFormat {
        match prec {
            Precision::Single => self.fmt32,
            Precision::Double => self.fmt64,
        }
    }
}

/// Deliver an exact value `hi + lo` in `fmt`. `operands_finite` tells
/// whether an infinite `hi` is a fresh overflow or a propagated infinity.
#[inline]
fn deliver(
    hi: f64,
    lo: f64,
    operands_finite: bool,
    fmt: FloatFormat,
    policy: OverflowPolicy,
    counters: &mut EventCounters,
) -> Result<f64, FormatError> {
    if hi.is_nan() || (hi.is_infinite() && !operands_finite) {
        return Ok(hi);
    }
    let rounded = match fmt.precision_bits {
        _ if hi.is_infinite() => hi,
        53 => hi,
        // Round-to-odd needs two spare bits to make the second rounding exact.
        52 => round_to_precision(hi, 52),
        p => round_to_precision(round_to_odd(hi, lo), p),
    };
    let overflow = |value: f64, counters: &mut EventCounters| {
        counters.overflow += 1;
        match policy {
            OverflowPolicy::Signal => Err(FormatError::Overflow { value, format: fmt }),
            OverflowPolicy::SaturateToInfinity => Ok(f64::INFINITY.copysign(value)),
        }
    };
    match crate::fp_codec::clamp_exponent(rounded, fmt.exponent_bits) {
        RangeCheck::InRange(v) if v.is_infinite() => overflow(v, counters),
        RangeCheck::InRange(v) => Ok(v),
        RangeCheck::Overflow(v) => overflow(v, counters),
        RangeCheck::Underflow(zero) => {
            counters.underflow += 1;
            Ok(zero)
        }
    }
}

/// `a op b` emulated in `fmt`.
pub fn emulate_binop(
    op: Op,
    a: f64,
    b: f64,
    fmt: FloatFormat,
    policy: OverflowPolicy,
    counters: &mut EventCounters,
) -> Result<f64, FormatError> {
    let (hi, lo) = exact_parts(op, a, b);
    deliver(hi, lo, a.is_finite() && b.is_finite(), fmt, policy, counters)
}

/// `a * b + c` emulated in `fmt`. Correctly rounded whenever `a * b` is
/// exact in binary64 (always the case for operands of 26 bits or fewer);
/// otherwise subject to a second rounding.
pub fn emulate_fma(
    a: f64,
    b: f64,
    c: f64,
    fmt: FloatFormat,
    policy: OverflowPolicy,
    counters: &mut EventCounters,
) -> Result<f64, FormatError> {
    let (hi, lo) = fma_parts(a, b, c);
    let finite = a.is_finite() && b.is_finite() && c.is_finite();
    deliver(hi, lo, finite, fmt, policy, counters)
}

/// Round a raw value (weight, input) into `fmt` along the same path as an
/// operation result.
pub fn pre_round_input(
    x: f64,
    fmt: FloatFormat,
    policy: OverflowPolicy,
    counters: &mut EventCounters,
) -> Result<f64, FormatError> {
    deliver(x, 0.0, x.is_finite(), fmt, policy, counters)
}

/// Emulation backend with its own event counters.
#[derive(Debug, Clone)]
pub struct VprecContext {
    config: VprecConfig,
    counters: EventCounters,
}

impl VprecContext {
    pub fn new(config: VprecConfig) -> Self {
        VprecContext {
            config,
            counters: EventCounters::default(),
        }
    }

    pub fn config(&self) -> &VprecConfig {
        &self.config
    }
}

impl Arithmetic for VprecContext {
    #[inline]
    fn binop(&mut self, op: Op, a: f64, b: f64, prec: Precision) -> Result<f64, FormatError> {
        let fmt = self.config.format_for(prec);
        emulate_binop(op, a, b, fmt, self.config.overflow_policy, &mut self.counters)
    }

    #[inline]
    fn fma(&mut self, a: f64, b: f64, c: f64, prec: Precision) -> Result<f64, FormatError> {
        let fmt = self.config.format_for(prec);
        emulate_fma(a, b, c, fmt, self.config.overflow_policy, &mut self.counters)
    }

    #[inline]
    fn load(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError> {
        let fmt = self.config.format_for(prec);
        pre_round_input(x, fmt, self.config.overflow_policy, &mut self.counters)
    }

    #[inline]
    fn exp(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError> {
        let fmt = self.config.format_for(prec);
        let e = x.exp();
        deliver(e, 0.0, x.is_finite(), fmt, self.config.overflow_policy, &mut self.counters)
    }

    fn events(&self) -> EventCounters {
        self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::IeeeContext;
    use proptest::prelude::*;

    fn signal() -> (OverflowPolicy, EventCounters) {
        (OverflowPolicy::Signal, EventCounters::default())
    }

    #[test]
    fn representable_product_is_unchanged() {
        let (p, mut c) = signal();
        assert_eq!(emulate_binop(Op::Mul, 1.0, 1.0, FloatFormat::BFLOAT16, p, &mut c), Ok(1.0));
    }

    /// Exhaustive nearest-neighbour search over every finite positive
    /// bfloat16 value (bfloat16 is the top half of a binary32 pattern).
    fn bfloat16_nearest(x: f64) -> f64 {
        let mut best = 0.0f64;
        let mut best_bits = 0u32;
        for hi in 0u32..0x7f80 {
            let v = f32::from_bits(hi << 16) as f64;
            let (d, db) = ((v - x).abs(), (best - x).abs());
            if d < db || (d == db && hi % 2 == 0 && best_bits % 2 == 1) {
                best = v;
                best_bits = hi;
            }
        }
        best
    }

    #[test]
    fn one_third_in_bfloat16() {
        let third = bfloat16_nearest(1.0 / 3.0);
        let (p, mut c) = signal();
        let r = pre_round_input(1.0 / 3.0, FloatFormat::BFLOAT16, p, &mut c).unwrap();
        assert_eq!(r, third);
        let sum = emulate_binop(Op::Add, r, 0.0, FloatFormat::BFLOAT16, p, &mut c).unwrap();
        assert_eq!(sum, third);
        assert_eq!(third, 0.333984375);
    }

    #[test]
    fn bfloat8_overflow() {
        let (p, mut c) = signal();
        let r = emulate_binop(Op::Mul, 256.0, 256.0, FloatFormat::BFLOAT8, p, &mut c);
        assert!(matches!(r, Err(FormatError::Overflow { .. })));
        assert_eq!(c.overflow, 1);
        let mut c = EventCounters::default();
        let r = emulate_binop(
            Op::Mul,
            256.0,
            256.0,
            FloatFormat::BFLOAT8,
            OverflowPolicy::SaturateToInfinity,
            &mut c,
        );
        assert_eq!(r, Ok(f64::INFINITY));
        assert_eq!(c.overflow, 1);
    }

    #[test]
    fn underflow_flushes_and_counts() {
        let (p, mut c) = signal();
        let r = emulate_binop(Op::Mul, 2f64.powi(-10), 2f64.powi(-10), FloatFormat::BINARY16, p, &mut c);
        assert_eq!(r, Ok(0.0));
        assert_eq!(c, EventCounters { overflow: 0, underflow: 1 });
    }

    #[test]
    fn pre_round_examples() {
        let (p, mut c) = signal();
        for fmt in [FloatFormat::BINARY32, FloatFormat::BFLOAT8, FloatFormat::new(2, 2).unwrap()] {
            assert_eq!(pre_round_input(0.0, fmt, p, &mut c), Ok(0.0));
        }
        let r = pre_round_input(65520.0, FloatFormat::BINARY16, p, &mut c);
        assert!(matches!(r, Err(FormatError::Overflow { .. })));
        assert_eq!(pre_round_input(65504.0, FloatFormat::BINARY16, p, &mut c), Ok(65504.0));
    }

    #[test]
    fn infinities_propagate_without_new_events() {
        let (p, mut c) = signal();
        let r = emulate_binop(Op::Add, f64::INFINITY, 1.0, FloatFormat::BFLOAT8, p, &mut c);
        assert_eq!(r, Ok(f64::INFINITY));
        assert_eq!(c, EventCounters::default());
        // Overflow in binary64 itself is still an overflow of the format.
        let r = emulate_binop(Op::Mul, 1e300, 1e300, FloatFormat::BINARY64, p, &mut c);
        assert!(r.is_err());
    }

    #[test]
    fn exp_overflow_is_signalled() {
        let mut ctx = VprecContext::new(VprecConfig::new(FloatFormat::BINARY64, FloatFormat::BFLOAT8));
        assert!(ctx.exp(12.0, Precision::Single).is_err());
        assert!(ctx.exp(12.0, Precision::Double).is_ok());
        assert_eq!(ctx.events().overflow, 1);
    }

    fn single() -> impl Strategy<Value = f32> {
        // Exponents kept well inside the binary32 range so no operation
        // below produces a binary32 subnormal or overflows.
        (any::<bool>(), -40i32..40, 0u32..(1 << 23)).prop_map(|(neg, e, m)| {
            let v = f32::from_bits(((e + 127) as u32) << 23 | m);
            if neg {
                -v
            } else {
                v
            }
        })
    }

    fn double() -> impl Strategy<Value = f64> {
        any::<u64>().prop_map(f64::from_bits).prop_filter("finite", |x| x.is_finite())
    }

    proptest! {
        #[test]
        fn binary32_emulation_is_native(a in single(), b in single(), c in single(), op_idx in 0usize..4) {
            let (p, mut cnt) = signal();
            let fmt = FloatFormat::BINARY32;
            let op = Op::ALL[op_idx];
            let native = match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
            };
            let got = emulate_binop(op, a as f64, b as f64, fmt, p, &mut cnt).unwrap();
            prop_assert_eq!(got.to_bits(), (native as f64).to_bits());
            let fused = emulate_fma(a as f64, b as f64, c as f64, fmt, p, &mut cnt).unwrap();
            prop_assert_eq!(fused, a.mul_add(b, c) as f64);
        }

        #[test]
        fn binary64_emulation_is_identity(a in double(), b in double(), op_idx in 0usize..4) {
            let op = Op::ALL[op_idx];
            let mut emu = VprecContext::new(VprecConfig::native());
            let mut ieee = IeeeContext;
            let e = emu.binop(op, a, b, Precision::Double);
            let i = ieee.binop(op, a, b, Precision::Double).unwrap();
            match e {
                Ok(v) => prop_assert!(v.to_bits() == i.to_bits() || (v.is_nan() && i.is_nan())),
                // Only a genuine binary64 overflow may be signalled.
                Err(_) => prop_assert!(i.is_infinite()),
            }
        }

        #[test]
        fn results_are_closed_under_rerounding(
            a in double(), b in double(), op_idx in 0usize..4, p in 1u32..=53, e in 2u32..=11,
        ) {
            let fmt = FloatFormat::new(p, e).unwrap();
            let mut c = EventCounters::default();
            let policy = OverflowPolicy::SaturateToInfinity;
            let r = emulate_binop(Op::ALL[op_idx], a, b, fmt, policy, &mut c).unwrap();
            prop_assume!(r.is_finite());
            let again = pre_round_input(r, fmt, policy, &mut c).unwrap();
            prop_assert_eq!(again.to_bits(), r.to_bits());
        }

        #[test]
        fn counters_never_decrease(xs in proptest::collection::vec(double(), 1..50)) {
            let mut ctx = VprecContext::new(VprecConfig {
                overflow_policy: OverflowPolicy::SaturateToInfinity,
                ..VprecConfig::new(FloatFormat::BFLOAT8, FloatFormat::BFLOAT8)
            });
            let mut last = EventCounters::default();
            for w in xs.windows(2) {
                let _ = ctx.mul(w[0], w[1], Precision::Single);
                let now = ctx.events();
                prop_assert!(now.overflow >= last.overflow && now.underflow >= last.underflow);
                last = now;
            }
        }
    }
}
