//! Significant-digit estimation from Monte Carlo samples.
//!
//! The estimator is the non-parametric one: a bit position `k` is
//! significant for a sample when its relative distance to the reference is
//! below `2^-k`, and the number of significant bits is the largest `k` that
//! is significant for every sample.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fp_codec::exponent_of;

/// Largest number of significant bits reported (binary64 significand).
pub const MAX_BITS: u32 = 53;

/// Confidence attached to a significant-digit estimate from a fixed sample
/// count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub samples: usize,
    pub confidence: f64,
    pub probability: f64,
}

/// Ten samples give confidence 0.80 that at least 85% of future samples
/// share the estimated digits.
pub const TEN_SAMPLE_CONFIDENCE: Confidence = Confidence {
    samples: 10,
    confidence: 0.80,
    probability: 0.85,
};

/// Confidence metadata for `n` samples, where tabulated.
pub fn confidence_for(n: usize) -> Option<Confidence> {
    (n == TEN_SAMPLE_CONFIDENCE.samples).then_some(TEN_SAMPLE_CONFIDENCE)
}

/// Relative distance `(x - reference) / reference`.
#[inline]
fn relative_distance(x: f64, reference: f64) -> f64 {
    (x - reference) / reference
}

/// Number of significant bits shared by every sample with `reference`, in
/// `0..=53`.
///
/// A zero reference is only meaningful when every sample is also zero, in
/// which case all 53 bits agree.
pub fn significant_bits(samples: &[f64], reference: f64) -> Result<u32, Error> {
    if reference == 0.0 {
        return if samples.iter().all(|&x| x == 0.0) {
            Ok(MAX_BITS)
        } else {
            Err(Error::UndefinedReference)
        };
    }
    let mut worst = 0.0f64;
    for &x in samples {
        let z = relative_distance(x, reference).abs();
        if z.is_nan() {
            return Ok(0);
        }
        worst = worst.max(z);
    }
    Ok(bits_for_distance(worst))
}

/// Largest `k` in `1..=53` with `distance < 2^-k`, or 0.
#[inline]
fn bits_for_distance(distance: f64) -> u32 {
    match exponent_of(distance) {
        // distance == 0 satisfies every k; infinity satisfies none.
        None if distance == 0.0 => MAX_BITS,
        None => 0,
        // 2^e <= distance < 2^(e+1), so distance < 2^-k exactly when k <= -e-1.
        Some(e) => (-e - 1).clamp(0, MAX_BITS as i32) as u32,
    }
}

/// `bits * log10(2)`.
#[inline]
pub fn bits_to_digits(bits: f64) -> f64 {
    bits * std::f64::consts::LOG10_2
}

/// Arithmetic mean and unbiased (n - 1) standard deviation. The deviation
/// is `None` for fewer than two samples. Identical samples give their own
/// value and a deviation of exactly zero.
pub fn sample_stats(samples: &[f64]) -> (f64, Option<f64>) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    if samples.iter().all(|&x| x == samples[0]) {
        return (samples[0], (n > 1).then_some(0.0));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let ss: f64 = samples.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, Some((ss / (n - 1) as f64).sqrt()))
}

/// `n` iterations of `m` outputs each, plus the unperturbed reference run.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<Vec<f64>>,
    reference: Vec<f64>,
}

/// Per-output summary of a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub stddev: Option<f64>,
    pub significant_bits: Option<u32>,
}

impl SampleSet {
    pub fn new(samples: Vec<Vec<f64>>, reference: Vec<f64>) -> Result<Self, Error> {
        if samples.is_empty() {
            return Err(Error::Samples("no samples".into()));
        }
        let m = reference.len();
        if let Some(row) = samples.iter().position(|r| r.len() != m) {
            return Err(Error::Samples(format!(
                "row {row} has {} outputs, reference has {m}",
                samples[row].len()
            )));
        }
        Ok(SampleSet { samples, reference })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn m(&self) -> usize {
        self.reference.len()
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|row| row[j]).collect()
    }

    pub fn confidence(&self) -> Option<Confidence> {
        confidence_for(self.n())
    }

    /// Statistics for every output column. Significant bits are capped at
    /// `ceiling`, the precision of the format the outputs were produced in;
    /// they are `None` where the reference is zero and a sample is not.
    pub fn column_stats(&self, ceiling: u32) -> Vec<ColumnStats> {
        (0..self.m())
            .map(|j| {
                let col = self.column(j);
                let (mean, stddev) = sample_stats(&col);
                let significant_bits = significant_bits(&col, self.reference[j])
                    .ok()
                    .map(|b| b.min(ceiling));
                ColumnStats {
                    mean,
                    stddev,
                    significant_bits,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct transcription of the definition: scan every k and keep the
    /// largest one for which all samples are significant.
    fn brute_force_bits(samples: &[f64], reference: f64) -> u32 {
        let mut best = 0;
        for k in 1..=53 {
            let bound = 2f64.powi(-k);
            if samples.iter().all(|&x| ((x - reference) / reference).abs() < bound) {
                best = k as u32;
            }
        }
        best
    }

    #[test]
    fn identical_samples_have_all_bits() {
        assert_eq!(significant_bits(&[3.5; 10], 3.5).unwrap(), 53);
    }

    #[test]
    fn symmetric_distance_of_two_to_minus_ten() {
        let r = 1.0;
        let s = [r * (1.0 + 2f64.powi(-10)), r * (1.0 - 2f64.powi(-10))];
        assert_eq!(brute_force_bits(&s, r), 9);
        assert_eq!(significant_bits(&s, r).unwrap(), 9);
    }

    #[test]
    fn worst_sample_binds() {
        let r = 4.0;
        let mut s = vec![r * (1.0 + 2f64.powi(-40)); 9];
        s.push(r * (1.0 + 2f64.powi(-3)));
        assert_eq!(brute_force_bits(&s, r), 2);
        assert_eq!(significant_bits(&s, r).unwrap(), 2);
    }

    #[test]
    fn zero_reference() {
        assert_eq!(significant_bits(&[0.0, 0.0], 0.0).unwrap(), 53);
        assert!(matches!(significant_bits(&[0.0, 1e-9], 0.0), Err(Error::UndefinedReference)));
    }

    #[test]
    fn far_samples_have_no_bits() {
        assert_eq!(significant_bits(&[3.0], 1.0).unwrap(), 0);
        assert_eq!(significant_bits(&[1.6], 1.0).unwrap(), 0);
        assert_eq!(significant_bits(&[f64::NAN], 1.0).unwrap(), 0);
        assert_eq!(significant_bits(&[f64::INFINITY], 1.0).unwrap(), 0);
    }

    #[test]
    fn digit_ceilings() {
        assert!((bits_to_digits(53.0) - 15.95).abs() < 0.005);
        // 24 log10(2) = 7.2247; the commonly quoted 7.23 is within 0.01.
        assert!((bits_to_digits(24.0) - 7.2247).abs() < 5e-5);
        assert!((bits_to_digits(24.0) - 7.23).abs() < 0.01);
        assert_eq!(bits_to_digits(0.0), 0.0);
    }

    #[test]
    fn stats_examples() {
        assert_eq!(sample_stats(&[2.5; 4]), (2.5, Some(0.0)));
        let (m, s) = sample_stats(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, Some(2f64.sqrt()));
        assert_eq!(sample_stats(&[1.0]).1, None);
        // 10 * 0.1 / 10 is not 0.1 in binary64; equal samples must not
        // pick up a rounding residue.
        assert_eq!(sample_stats(&[0.1; 10]), (0.1, Some(0.0)));
    }

    #[test]
    fn sample_set_shapes() {
        assert!(SampleSet::new(vec![], vec![1.0]).is_err());
        assert!(SampleSet::new(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0]).is_err());
        let set = SampleSet::new(vec![vec![1.0, 0.0]; 10], vec![1.0, 0.0]).unwrap();
        assert_eq!(set.confidence(), Some(TEN_SAMPLE_CONFIDENCE));
        let stats = set.column_stats(24);
        assert_eq!(stats[0].significant_bits, Some(24));
        assert_eq!(stats[1].significant_bits, Some(24));
        assert_eq!(stats[0].stddev, Some(0.0));
    }

    fn reference() -> impl Strategy<Value = f64> {
        (0.5f64..2.0, -30i32..30, any::<bool>())
            .prop_map(|(m, e, neg)| if neg { -m * 2f64.powi(e) } else { m * 2f64.powi(e) })
    }

    proptest! {
        #[test]
        fn matches_brute_force(r in reference(), zs in proptest::collection::vec(-0.5f64..0.5, 1..12), scale in -50i32..0) {
            let s: Vec<f64> = zs.iter().map(|z| r * (1.0 + z * 2f64.powi(scale))).collect();
            prop_assert_eq!(significant_bits(&s, r).unwrap(), brute_force_bits(&s, r));
        }

        #[test]
        fn scale_invariant(r in reference(), zs in proptest::collection::vec(-0.5f64..0.5, 1..12), k in -20i32..20, neg in any::<bool>()) {
            let c = if neg { -(2f64.powi(k)) } else { 2f64.powi(k) };
            let s: Vec<f64> = zs.iter().map(|z| r * (1.0 + z * 1e-6)).collect();
            let scaled: Vec<f64> = s.iter().map(|x| c * x).collect();
            prop_assert_eq!(significant_bits(&s, r).unwrap(), significant_bits(&scaled, c * r).unwrap());
        }

        #[test]
        fn doubling_noise_costs_one_bit(zs in proptest::collection::vec(1e-12f64..1e-3, 1..10), signs in proptest::collection::vec(any::<bool>(), 10)) {
            // Reference 1 and power-of-two scaling keep every distance exact.
            let d: Vec<f64> = zs.iter().zip(&signs).map(|(z, &n)| if n { -z } else { *z }).collect();
            let once: Vec<f64> = d.iter().map(|z| 1.0 + z).collect();
            let twice: Vec<f64> = d.iter().map(|z| 1.0 + 2.0 * (once_dist(1.0 + z))).collect();
            let b1 = significant_bits(&once, 1.0).unwrap();
            let b2 = significant_bits(&twice, 1.0).unwrap();
            prop_assume!(b1 > 1 && b1 < 53);
            prop_assert_eq!(b2, b1 - 1);
        }

        #[test]
        fn digits_linear_increasing(a in 0.0f64..53.0, b in 0.0f64..53.0) {
            prop_assert!((bits_to_digits(a + b) - bits_to_digits(a) - bits_to_digits(b)).abs() < 1e-12);
            if a < b {
                prop_assert!(bits_to_digits(a) < bits_to_digits(b));
            }
        }
    }

    fn once_dist(x: f64) -> f64 {
        x - 1.0
    }
}
