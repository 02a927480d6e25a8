//! Monte Carlo Arithmetic.
//!
//! Each perturbed value is `x + 2^(e_x - t) * xi` where `e_x` is the exponent
//! of `x`, `t` the virtual precision and `xi` uniform on `(-1/2, 1/2)`.
//! Random rounding perturbs operation results, precision bounding perturbs
//! operands, and full MCA does both.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{exact_parts, fma_parts, Arithmetic, Op, Precision};
use crate::error::{Error, FormatError};
use crate::fp_codec::{exponent_of, ldexp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McaMode {
    /// Random rounding: perturb results.
    Rr,
    /// Precision bounding: perturb operands.
    Pb,
    /// Both.
    Full,
}

impl McaMode {
    fn perturbs_inputs(self) -> bool {
        matches!(self, McaMode::Pb | McaMode::Full)
    }

    fn perturbs_output(self) -> bool {
        matches!(self, McaMode::Rr | McaMode::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McaConfig {
    pub mode: McaMode,
    /// Virtual precision of binary32-class operations.
    pub t32: u32,
    /// Virtual precision of binary64-class operations.
    pub t64: u32,
    pub seed: u64,
    /// Perturb results even when the binary64 operation was exact.
    pub perturb_exact: bool,
    /// Perturb the output of the natively evaluated exponential.
    pub perturb_exp: bool,
}

impl McaConfig {
    pub fn new(mode: McaMode, seed: u64) -> Self {
        McaConfig {
            mode,
            t32: 24,
            t64: 53,
            seed,
            perturb_exact: true,
            perturb_exp: false,
        }
    }

    pub fn with_precisions(mut self, t32: u32, t64: u32) -> Self {
        self.t32 = t32;
        self.t64 = t64;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(1..=24).contains(&self.t32) {
            return Err(Error::Config(format!("t32 = {} outside 1..=24", self.t32)));
        }
        if !(1..=53).contains(&self.t64) {
            return Err(Error::Config(format!("t64 = {} outside 1..=53", self.t64)));
        }
        Ok(())
    }

    fn precision_for(&self, prec: Precision) -> u32 {
        match prec {
            Precision::Single => self.t32,
            Precision::Double => self.t64,
        }
    }
}

/// A draw of the uniform noise variable on the open interval `(-1/2, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Xi(f64);

impl Xi {
    #[inline]
    pub fn sample<R: RngCore + ?Sized>(rng: &mut R) -> Xi {
        // (k + 1/2) / 2^52 lies strictly inside (0, 1) and is exact; the
        // shift by 1/2 cannot round onto either endpoint.
        let k = rng.next_u64() >> 12;
        Xi((k as f64 + 0.5) * ldexp(1.0, -52) - 0.5)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Perturb `hi + lo` (an exact value split into its rounded part and error)
/// at virtual precision `t`, returning the binary64 rounding of the result.
#[inline]
fn inexact_parts<R: RngCore + ?Sized>(hi: f64, lo: f64, t: u32, rng: &mut R) -> f64 {
    match exponent_of(hi) {
        None => hi,
        Some(e) => {
            let noise = ldexp(Xi::sample(rng).value(), e - t as i32);
            hi + (lo + noise)
        }
    }
}

/// `x + 2^(e_x - t) * xi`. Zero, infinities and NaN pass through untouched
/// and consume no randomness.
///
/// # Panics
///
/// If `t` is outside `1..=53`.
#[inline]
pub fn inexact<R: RngCore + ?Sized>(x: f64, t: u32, rng: &mut R) -> f64 {
    assert!((1..=53).contains(&t), "virtual precision {t} outside 1..=53");
    inexact_parts(x, 0.0, t, rng)
}

#[inline]
fn perturbed_binop<R: RngCore + ?Sized>(
    mode: McaMode,
    op: Op,
    mut a: f64,
    mut b: f64,
    t: u32,
    perturb_exact: bool,
    rng: &mut R,
) -> f64 {
    if mode.perturbs_inputs() {
        a = inexact(a, t, rng);
        b = inexact(b, t, rng);
    }
    let (hi, lo) = exact_parts(op, a, b);
    if mode.perturbs_output() && (perturb_exact || lo != 0.0) {
        inexact_parts(hi, lo, t, rng)
    } else {
        hi
    }
}

#[inline]
fn perturbed_fma<R: RngCore + ?Sized>(
    mode: McaMode,
    mut a: f64,
    mut b: f64,
    mut c: f64,
    t: u32,
    perturb_exact: bool,
    rng: &mut R,
) -> f64 {
    if mode.perturbs_inputs() {
        a = inexact(a, t, rng);
        b = inexact(b, t, rng);
        c = inexact(c, t, rng);
    }
    let (hi, lo) = fma_parts(a, b, c);
    if mode.perturbs_output() && (perturb_exact || lo != 0.0) {
        inexact_parts(hi, lo, t, rng)
    } else {
        hi
    }
}

/// Random rounding of a binary64 operation: the exact result of `x op y`
/// perturbed at virtual precision `t`, then rounded to binary64.
pub fn rr_binop<R: RngCore + ?Sized>(op: Op, x: f64, y: f64, t: u32, rng: &mut R) -> f64 {
    perturbed_binop(McaMode::Rr, op, x, y, t, true, rng)
}

/// Precision bounding: both operands perturbed, then the operation.
pub fn pb_binop<R: RngCore + ?Sized>(op: Op, x: f64, y: f64, t: u32, rng: &mut R) -> f64 {
    perturbed_binop(McaMode::Pb, op, x, y, t, true, rng)
}

/// Full MCA: operands and result perturbed.
pub fn full_mca_binop<R: RngCore + ?Sized>(op: Op, x: f64, y: f64, t: u32, rng: &mut R) -> f64 {
    perturbed_binop(McaMode::Full, op, x, y, t, true, rng)
}

/// `x * y + z` under the given mode.
pub fn mca_fma<R: RngCore + ?Sized>(
    mode: McaMode,
    x: f64,
    y: f64,
    z: f64,
    t: u32,
    rng: &mut R,
) -> f64 {
    perturbed_fma(mode, x, y, z, t, true, rng)
}

/// An MCA backend owning its own random stream.
#[derive(Debug, Clone)]
pub struct McaContext {
    config: McaConfig,
    rng: ChaCha8Rng,
}

impl McaContext {
    /// A context whose noise comes from ChaCha8 seeded with `config.seed`,
    /// on the given stream. Distinct streams are independent.
    pub fn new(config: McaConfig, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        McaContext { config, rng }
    }

    pub fn config(&self) -> &McaConfig {
        &self.config
    }
}

impl Arithmetic for McaContext {
    #[inline]
    fn binop(&mut self, op: Op, a: f64, b: f64, prec: Precision) -> Result<f64, FormatError> {
        let c = &self.config;
        let v = perturbed_binop(
            c.mode,
            op,
            a,
            b,
            c.precision_for(prec),
            c.perturb_exact,
            &mut self.rng,
        );
        Ok(prec.round_native(v))
    }

    #[inline]
    fn fma(&mut self, a: f64, b: f64, x: f64, prec: Precision) -> Result<f64, FormatError> {
        let c = &self.config;
        let v = perturbed_fma(
            c.mode,
            a,
            b,
            x,
            c.precision_for(prec),
            c.perturb_exact,
            &mut self.rng,
        );
        Ok(prec.round_native(v))
    }

    #[inline]
    fn load(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError> {
        Ok(prec.round_native(x))
    }

    #[inline]
    fn exp(&mut self, x: f64, prec: Precision) -> Result<f64, FormatError> {
        let e = x.exp();
        if self.config.perturb_exp && self.config.mode.perturbs_output() {
            let t = self.config.precision_for(prec);
            Ok(prec.round_native(inexact(e, t, &mut self.rng)))
        } else {
            Ok(prec.round_native(e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;
    use proptest::prelude::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn xi_stays_open() {
        struct Fixed(u64);
        impl RngCore for Fixed {
            fn next_u32(&mut self) -> u32 {
                self.0 as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {
                unimplemented!()
            }
        }
        let lo = Xi::sample(&mut Fixed(0)).value();
        let hi = Xi::sample(&mut Fixed(u64::MAX)).value();
        assert!(lo > -0.5 && lo < -0.5 + 1e-15);
        assert!(hi < 0.5 && hi > 0.5 - 1e-15);
    }

    #[test]
    fn inexact_passthrough() {
        let mut r = rng();
        assert_eq!(inexact(0.0, 24, &mut r).to_bits(), 0.0f64.to_bits());
        assert_eq!(inexact(-0.0, 24, &mut r).to_bits(), (-0.0f64).to_bits());
        assert_eq!(inexact(f64::INFINITY, 24, &mut r), f64::INFINITY);
        assert!(inexact(f64::NAN, 24, &mut r).is_nan());
    }

    #[test]
    fn inexact_bound_around_one() {
        let mut r = rng();
        let half_width = 2f64.powi(-25);
        for _ in 0..10_000 {
            let v = inexact(1.0, 24, &mut r);
            assert!(v > 1.0 - half_width && v < 1.0 + half_width, "{v}");
        }
    }

    #[test]
    fn inexact_mean_matches_monte_carlo_oracle() {
        // xi has mean 0 and variance 1/12, so the sample mean of 1e5 draws
        // scaled by 2^-24 has standard error 2^-24 / sqrt(12e5).
        let mut r = rng();
        let n = 100_000;
        let mean = (0..n).map(|_| inexact(1.0, 24, &mut r) - 1.0).sum::<f64>() / n as f64;
        let se = 2f64.powi(-24) / (12.0 * n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean:e}, se {se:e}");
    }

    #[test]
    fn rr_at_53_is_within_one_ulp_and_mostly_exact() {
        let mut r = rng();
        let ulp = 2f64.powi(-51);
        let mut exact_hits = 0;
        for _ in 0..10_000 {
            let v = rr_binop(Op::Add, 1.0, 1.0, 53, &mut r);
            assert!((v - 2.0).abs() <= ulp);
            exact_hits += (v == 2.0) as usize;
        }
        assert!(exact_hits > 5_000);
    }

    #[test]
    fn rr_zero_passthrough() {
        let mut r = rng();
        assert_eq!(rr_binop(Op::Mul, 3.25, 0.0, 24, &mut r), 0.0);
        assert_eq!(rr_binop(Op::Sub, 3.25, 3.25, 24, &mut r), 0.0);
    }

    #[test]
    fn pb_cancellation_exposure() {
        let mut r = rng();
        assert_eq!(pb_binop(Op::Add, 0.0, 0.0, 24, &mut r), 0.0);
        let bound = 2f64.powi(-24);
        let mut nonzero = 0;
        for _ in 0..10_000 {
            let v = pb_binop(Op::Sub, 1.0, 1.0, 24, &mut r);
            assert!(v > -bound && v < bound);
            nonzero += (v != 0.0) as usize;
        }
        assert!(nonzero > 9_990);
    }

    /// Kolmogorov-Smirnov distance between an empirical sample and a CDF.
    fn ks_distance(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        sample.sort_by(f64::total_cmp);
        let n = sample.len() as f64;
        sample
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    /// CDF of the difference of two independent uniforms on (-1/2, 1/2):
    /// triangular on (-1, 1).
    fn triangular_cdf(u: f64) -> f64 {
        if u <= -1.0 {
            0.0
        } else if u <= 0.0 {
            (u + 1.0).powi(2) / 2.0
        } else if u < 1.0 {
            1.0 - (1.0 - u).powi(2) / 2.0
        } else {
            1.0
        }
    }

    #[test]
    fn pb_difference_matches_convolution_of_uniforms() {
        // (1 + a xi1) - (1 + a xi2) with a = 2^-24 is a (xi1 - xi2).
        let mut r = rng();
        let scale = 2f64.powi(24);
        let sample: Vec<f64> = (0..100_000)
            .map(|_| pb_binop(Op::Sub, 1.0, 1.0, 24, &mut r) * scale)
            .collect();
        let d = ks_distance(sample, triangular_cdf);
        // 1.63 / sqrt(n) is the 1% critical value.
        assert!(d < 1.63 / (100_000f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn full_mca_cases() {
        let mut r = rng();
        assert_eq!(full_mca_binop(Op::Mul, 0.0, 5.0, 24, &mut r), 0.0);
        // Inputs contribute up to 2^-25 each and the result up to 2^-25 * 2^e.
        let bound = 2f64.powi(-24) + 2f64.powi(-25);
        let scale = 2f64.powi(24);
        let mut sample = Vec::new();
        for _ in 0..100_000 {
            let v = full_mca_binop(Op::Sub, 1.0, 1.0, 24, &mut r);
            assert!(v.abs() < bound);
            sample.push(v * scale);
        }
        // Cancellation leaves a tiny result whose own perturbation is
        // negligible, so the distribution is still the triangular one.
        let d = ks_distance(sample, triangular_cdf);
        assert!(d < 1.63 / (100_000f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn fma_modes() {
        let mut r = rng();
        let v = mca_fma(McaMode::Rr, 2.0, 3.0, 1.0, 24, &mut r);
        assert!((v - 7.0).abs() < 4.0 * 2f64.powi(-25));
        assert_eq!(mca_fma(McaMode::Rr, 2.0, 0.0, 0.0, 24, &mut r), 0.0);
    }

    #[test]
    fn context_streams_are_reproducible_and_distinct() {
        let cfg = McaConfig::new(McaMode::Rr, 99);
        let run = |stream| {
            let mut ctx = McaContext::new(cfg, stream);
            (0..64)
                .map(|i| ctx.div(1.0, 3.0 + i as f64, Precision::Double).unwrap().to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(0), run(0));
        assert_ne!(run(0), run(1));
    }

    #[test]
    fn exact_results_can_be_left_alone() {
        let mut cfg = McaConfig::new(McaMode::Rr, 1).with_precisions(8, 8);
        cfg.perturb_exact = false;
        let mut ctx = McaContext::new(cfg, 0);
        for _ in 0..100 {
            assert_eq!(ctx.add(1.0, 2.0, Precision::Double).unwrap(), 3.0);
        }
        cfg.perturb_exact = true;
        let mut ctx = McaContext::new(cfg, 0);
        assert!((0..100).any(|_| ctx.add(1.0, 2.0, Precision::Double).unwrap() != 3.0));
    }

    #[test]
    fn single_class_results_are_binary32() {
        let mut ctx = McaContext::new(McaConfig::new(McaMode::Full, 3), 0);
        for i in 1..200 {
            let v = ctx.div(1.0, i as f64, Precision::Single).unwrap();
            assert_eq!(v, v as f32 as f64);
        }
    }

    #[test]
    fn config_validation() {
        assert!(McaConfig::new(McaMode::Rr, 0).validate().is_ok());
        assert!(McaConfig::new(McaMode::Rr, 0).with_precisions(25, 53).validate().is_err());
        assert!(McaConfig::new(McaMode::Rr, 0).with_precisions(24, 0).validate().is_err());
    }

    fn normal_operand() -> impl Strategy<Value = f64> {
        (any::<bool>(), -60i32..60, 0u64..(1 << 52)).prop_map(|(neg, e, m)| {
            let v = f64::from_bits(((e + 1023) as u64) << 52 | m);
            if neg {
                -v
            } else {
                v
            }
        })
    }

    proptest! {
        #[test]
        fn magnitude_envelope(
            x in normal_operand(),
            y in normal_operand(),
            op_idx in 0usize..4,
            t in 1u32..=52,
            seed in any::<u64>(),
        ) {
            let op = Op::ALL[op_idx];
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (hi, lo) = exact_parts(op, x, y);
            prop_assume!(hi != 0.0);
            let v = rr_binop(op, x, y, t, &mut r);
            let e = exponent_of(hi).unwrap();
            // |v - (hi + lo)| computed as (v - hi) - lo; v and hi are close.
            let dev = ((v - hi) - lo).abs();
            prop_assert!(dev < ldexp(1.0, e - t as i32), "dev {dev:e}");
        }

        #[test]
        fn one_ulp_at_full_precision(x in normal_operand(), y in normal_operand(), op_idx in 0usize..4, seed in any::<u64>()) {
            // The final binary64 rounding can add half an ulp on top of the
            // quarter-ulp noise, so at t = 53 the envelope is one ulp.
            let op = Op::ALL[op_idx];
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (hi, lo) = exact_parts(op, x, y);
            prop_assume!(hi != 0.0);
            let v = rr_binop(op, x, y, 53, &mut r);
            let ulp = ldexp(1.0, exponent_of(hi).unwrap() - 52);
            prop_assert!(((v - hi) - lo).abs() <= ulp);
        }

        #[test]
        fn same_seed_same_stream(seed in any::<u64>(), x in normal_operand(), y in normal_operand()) {
            let mut a = ChaCha8Rng::seed_from_u64(seed);
            let mut b = ChaCha8Rng::seed_from_u64(seed);
            for op in Op::ALL {
                prop_assert_eq!(
                    full_mca_binop(op, x, y, 24, &mut a).to_bits(),
                    full_mca_binop(op, x, y, 24, &mut b).to_bits()
                );
            }
        }
    }
}
