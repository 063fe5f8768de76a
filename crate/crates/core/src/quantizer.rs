//! Scalar quantizer metrics.
//!
//! A [`ReferenceSet`] holds the `2^N + 1` thresholds of an N-bit quantizer in
//! LSB units. Code `i` owns the half-open region `[θ_i, θ_{i+1})`, the first
//! threshold is pinned at 0 and the last (a dummy) at `2^N`.
//!
//! Mismatch can make the thresholds non-monotone. Metrics then treat every
//! inverted region as empty (a missing code), and [`ReferenceSet::quantize`]
//! returns the smallest code whose non-empty region contains the input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest resolution a reference set may be built for.
pub const MAX_BITS: u32 = 26;

/// Quantization noise of an ideal N-bit quantizer, `2^(-2N) / 12`.
pub fn quantization_noise(bits: u32) -> f64 {
    (-2.0 * bits as f64).exp2() / 12.0
}

/// Entropy in bits of a quantizer with normalized total mean square error
/// `mse`: `-log2(sqrt(12 * mse))`.
pub fn entropy_of(mse: f64) -> Result<f64> {
    if !(mse > 0.0) || !mse.is_finite() {
        return Err(Error::Domain(format!(
            "entropy needs a positive finite mean square error, got {mse}"
        )));
    }
    Ok(-0.5 * (12.0 * mse).log2())
}

/// Mismatch-to-quantization ratio `(M - Q) / Q`.
pub fn mqr_of(mse: f64, bits: u32) -> f64 {
    let q = quantization_noise(bits);
    (mse - q) / q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    bits: u32,
    thresholds: Vec<f64>,
}

impl ReferenceSet {
    /// Builds a reference set from all `2^N + 1` thresholds.
    pub fn new(bits: u32, thresholds: Vec<f64>) -> Result<Self> {
        check_bits(bits)?;
        let codes = 1usize << bits;
        if thresholds.len() != codes + 1 {
            return Err(Error::validation(format!(
                "{bits}-bit reference set needs {} thresholds, got {}",
                codes + 1,
                thresholds.len()
            )));
        }
        if thresholds[0] != 0.0 {
            return Err(Error::validation(format!(
                "first threshold must be 0, got {}",
                thresholds[0]
            )));
        }
        if thresholds[codes] != codes as f64 {
            return Err(Error::validation(format!(
                "dummy threshold must be {codes}, got {}",
                thresholds[codes]
            )));
        }
        if let Some(bad) = thresholds.iter().position(|t| !t.is_finite()) {
            return Err(Error::validation(format!("threshold {bad} is not finite")));
        }
        Ok(Self { bits, thresholds })
    }

    /// Builds a reference set from the `2^N` code references, appending the
    /// dummy full-range threshold.
    pub fn from_references(bits: u32, mut references: Vec<f64>) -> Result<Self> {
        check_bits(bits)?;
        references.push((1u64 << bits) as f64);
        Self::new(bits, references)
    }

    /// The mismatch-free partition `θ_i = i`.
    pub fn ideal(bits: u32) -> Result<Self> {
        check_bits(bits)?;
        let thresholds = (0..=(1u64 << bits)).map(|i| i as f64).collect();
        Ok(Self { bits, thresholds })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn code_count(&self) -> usize {
        1usize << self.bits
    }

    /// All `2^N + 1` thresholds, dummy included.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn is_monotone(&self) -> bool {
        self.thresholds.windows(2).all(|w| w[0] <= w[1])
    }

    /// Code of the region containing `x`.
    pub fn quantize(&self, x: f64) -> Result<u64> {
        let upper = self.code_count() as f64;
        if !(0.0..upper).contains(&x) {
            return Err(Error::Range { value: x, upper });
        }
        let t = &self.thresholds;
        if self.is_monotone() {
            return Ok((t.partition_point(|&v| v <= x) - 1) as u64);
        }
        // The threshold path starts at 0 and ends at 2^N, so some forward
        // region always covers x.
        let code = (0..self.code_count())
            .find(|&i| t[i] <= x && x < t[i + 1])
            .expect("forward regions cover the full range");
        Ok(code as u64)
    }

    /// Normalized total mean square error, integrated in closed form per
    /// region. Inverted regions contribute nothing.
    pub fn total_mse(&self) -> f64 {
        let mut sum = NeumaierSum::default();
        for (i, w) in self.thresholds.windows(2).enumerate() {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                continue;
            }
            let centre = i as f64 + 0.5;
            let a = lo - centre;
            let b = hi - centre;
            sum.add((b * b * b - a * a * a) / 3.0);
        }
        sum.value() * (-3.0 * self.bits as f64).exp2()
    }

    pub fn metrics(&self) -> QuantizerMetrics {
        QuantizerMetrics::from_mse(self.total_mse(), self.bits)
            .expect("a partition of a positive-length range has positive error")
    }

    pub fn error_profile(&self) -> ErrorProfile {
        let codes = self.code_count();
        let t = &self.thresholds;
        let absolute_error = (0..codes).map(|i| t[i] - i as f64).collect();
        let differential_gap: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let wide_code_count = differential_gap.iter().filter(|&&g| g > 2.0).count();
        ErrorProfile {
            absolute_error,
            differential_gap,
            wide_code_count,
        }
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::validation(format!(
            "resolution must be within 1..={MAX_BITS} bits, got {bits}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerMetrics {
    pub mse: f64,
    pub quantization_noise: f64,
    /// Bits.
    pub entropy: f64,
    pub mqr: f64,
}

impl QuantizerMetrics {
    pub fn from_mse(mse: f64, bits: u32) -> Result<Self> {
        Ok(Self {
            mse,
            quantization_noise: quantization_noise(bits),
            entropy: entropy_of(mse)?,
            mqr: mqr_of(mse, bits),
        })
    }
}

/// Per-code mismatch error of a reference set, in LSB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    /// `θ_i - i` for every code.
    pub absolute_error: Vec<f64>,
    /// `θ_{i+1} - θ_i` for every code, the last one ending at the dummy.
    pub differential_gap: Vec<f64>,
    /// Codes whose gap exceeds two LSB.
    pub wide_code_count: usize,
}

impl ErrorProfile {
    pub fn gap_sum(&self) -> f64 {
        let mut sum = NeumaierSum::default();
        self.differential_gap.iter().for_each(|&g| sum.add(g));
        sum.value()
    }
}

/// Compensated summation; keeps `2^24` equal terms exact to a few ulps.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    carry: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(bits: u32, t: &[f64]) -> ReferenceSet {
        ReferenceSet::new(bits, t.to_vec()).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let ideal = ReferenceSet::ideal(2).unwrap();
        assert_eq!(ideal.quantize(0.5).unwrap(), 0);
        for i in 0..4 {
            assert_eq!(ideal.quantize(i as f64).unwrap(), i);
        }
        let r = refs(2, &[0.0, 0.9, 2.1, 3.0, 4.0]);
        assert_eq!(r.quantize(2.3).unwrap(), 2);
        assert_eq!(r.quantize(0.9).unwrap(), 1);
    }

    #[test]
    fn quantize_rejects_out_of_range() {
        let r = ReferenceSet::ideal(3).unwrap();
        assert!(matches!(r.quantize(8.0), Err(Error::Range { .. })));
        assert!(matches!(r.quantize(-1e-9), Err(Error::Range { .. })));
        assert!(r.quantize(f64::NAN).is_err());
    }

    #[test]
    fn quantize_skips_empty_and_inverted_regions() {
        // Region 1 is empty, region 2 inverted.
        let r = refs(2, &[0.0, 1.5, 1.5, 1.0, 4.0]);
        assert!(!r.is_monotone());
        assert_eq!(r.quantize(1.2).unwrap(), 0);
        assert_eq!(r.quantize(1.5).unwrap(), 3);
        assert_eq!(r.quantize(3.9).unwrap(), 3);
        // Monotone with an empty region.
        let r = refs(2, &[0.0, 2.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.quantize(2.0).unwrap(), 2);
    }

    #[test]
    fn construction_checks_invariants() {
        assert!(ReferenceSet::new(2, vec![0.0, 1.0, 2.0, 4.0]).is_err());
        assert!(ReferenceSet::new(2, vec![0.1, 1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(ReferenceSet::new(2, vec![0.0, 1.0, 2.0, 3.0, 3.9]).is_err());
        assert!(ReferenceSet::new(2, vec![0.0, f64::NAN, 2.0, 3.0, 4.0]).is_err());
        assert!(ReferenceSet::ideal(0).is_err());
        assert!(ReferenceSet::ideal(MAX_BITS + 1).is_err());
    }

    #[test]
    fn ideal_mse_is_quantization_noise() {
        for bits in 1..=12 {
            let m = ReferenceSet::ideal(bits).unwrap().total_mse();
            assert!((m / quantization_noise(bits) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn two_region_mse_matches_hand_cubics() {
        // ∫0^1.5 (x-0.5)^2 = (1^3 + 0.5^3)/3, ∫1.5^2 (x-1.5)^2 = 0.5^3/3.
        let expected = (1.0 + 0.125 + 0.125) / 3.0 / 8.0;
        let m = refs(1, &[0.0, 1.5, 2.0]).total_mse();
        assert!((m - expected).abs() < 1e-15, "{m} vs {expected}");
    }

    #[test]
    fn inverted_region_contributes_nothing() {
        let with_inversion = refs(2, &[0.0, 2.5, 1.5, 3.0, 4.0]).total_mse();
        let c = |lo: f64, hi: f64, i: f64| ((hi - i - 0.5).powi(3) - (lo - i - 0.5).powi(3)) / 3.0;
        let expected = (c(0.0, 2.5, 0.0) + c(1.5, 3.0, 2.0) + c(3.0, 4.0, 3.0)) / 64.0;
        assert!((with_inversion - expected).abs() < 1e-15);
    }

    #[test]
    fn entropy_examples() {
        let q = quantization_noise(14);
        assert!((entropy_of(q).unwrap() - 14.0).abs() < 1e-12);
        assert!((entropy_of(4.0 * q).unwrap() - 13.0).abs() < 1e-12);
        assert!(entropy_of(0.0).is_err());
        assert!(entropy_of(-1.0).is_err());
    }

    #[test]
    fn mqr_examples() {
        let q = quantization_noise(10);
        assert_eq!(mqr_of(q, 10), 0.0);
        assert!((mqr_of(2.0 * q, 10) - 1.0).abs() < 1e-15);
        assert!(ReferenceSet::ideal(6).unwrap().metrics().mqr.abs() < 1e-12);
    }

    #[test]
    fn error_profile_examples() {
        let ideal = ReferenceSet::ideal(4).unwrap().error_profile();
        assert!(ideal.absolute_error.iter().all(|&e| e == 0.0));
        assert!(ideal.differential_gap.iter().all(|&g| g == 1.0));
        assert_eq!(ideal.wide_code_count, 0);

        let p = refs(2, &[0.0, 0.5, 3.1, 3.5, 4.0]).error_profile();
        let expected = [0.5, 2.6, 0.4, 0.5];
        for (g, e) in p.differential_gap.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12);
        }
        assert_eq!(p.wide_code_count, 1);
        assert_eq!(p.absolute_error[0], 0.0);
        assert_eq!(p.gap_sum(), 4.0);
    }
}
