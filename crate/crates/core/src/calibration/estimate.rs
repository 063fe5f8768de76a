//! Unsupervised mismatch estimation on a half-split array.
//!
//! Iteration `i` (1 ≤ i < N) compares `c_{0,i}` and `c_{1,i-1}` against the
//! pair below them, `c_{0,i-1} + c_{1,i-2}`, which has the same nominal
//! weight. The differences are integrated upwards from `c_{0,0}` (taken as
//! error-free), and the resulting bias, proportional to nominal weight,
//! is removed using the fact that all relative errors sum to zero.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::fixed_point::FixedPointFormat;
use super::{HalfSplitArray, MeasurementMode};
use crate::component::GeometricIdentity;
use crate::error::{Error, Result};

/// The two differences resolved in one iteration, in LSB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferencePair {
    /// `c_{0,i} - (c_{0,i-1} + c_{1,i-2})`.
    pub primary: f64,
    /// `c_{1,i-1} - (c_{0,i-1} + c_{1,i-2})`.
    pub secondary: f64,
}

/// Stored per-component error estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchEstimate {
    pub identity: GeometricIdentity,
    pub format: FixedPointFormat,
    /// Raw fixed-point integers per `(set, index)`.
    pub eps: Vec<Vec<i32>>,
    /// `raw_differences[i - 1]` holds iteration `i`.
    pub raw_differences: Vec<DifferencePair>,
    /// Comparator offset as measured before estimation, LSB.
    pub v_co_estimate: f64,
    /// Bias-corrected estimates before fixed-point encoding.
    #[serde(default)]
    pub unquantized: Vec<Vec<f64>>,
    /// Components whose value hit the storage range.
    #[serde(default)]
    pub saturated: Vec<(usize, usize)>,
    /// Difference conversions that ran out of range.
    #[serde(default)]
    pub conversion_overflows: u32,
}

impl MismatchEstimate {
    /// Decoded estimate of `(set, index)`.
    pub fn value(&self, set: usize, index: usize) -> f64 {
        self.format.decode(self.eps[set][index])
    }

    /// Decoded estimates in flat component order.
    pub fn values_flat(&self) -> Vec<f64> {
        self.eps
            .iter()
            .flatten()
            .map(|&raw| self.format.decode(raw))
            .collect()
    }

    pub fn unquantized_flat(&self) -> Vec<f64> {
        self.unquantized.iter().flatten().copied().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let est: Self = serde_json::from_str(s)?;
        est.validate()?;
        Ok(est)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.identity.is_half_split() {
            return Err(Error::validation(format!(
                "estimate identity {} is not half-split",
                self.identity
            )));
        }
        let shape = self.identity.nominal_sets();
        let ok = self.eps.len() == shape.len()
            && self.eps.iter().zip(&shape).all(|(e, s)| e.len() == s.len());
        if !ok {
            return Err(Error::validation("estimate table does not match the identity"));
        }
        if let Some(raw) = self.eps.iter().flatten().find(|r| !self.format.contains_raw(**r)) {
            return Err(Error::validation(format!("raw value {raw} outside the storage format")));
        }
        Ok(())
    }
}

/// Comparator with residual offset and per-decision Gaussian noise.
struct Comparator<'a, R> {
    offset: f64,
    noise: f64,
    rng: &'a mut R,
}

impl<R: Rng> Comparator<'_, R> {
    /// True when `v` plus offset and noise is non-negative.
    fn decide(&mut self, v: f64) -> bool {
        let n = if self.noise > 0.0 {
            self.noise * self.rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        v + self.offset + n >= 0.0
    }
}

/// One charge-redistribution conversion of a signed charge `value`.
///
/// The sign is resolved first, then the magnitude by successive
/// approximation over `ladder` (actual, nominal) pairs, largest first.
/// Half a sub-DAC step is pre-added so the result rounds to nearest.
/// Returns the nominal-weight reading and whether the ladder overflowed.
fn convert<R: Rng>(value: f64, ladder: &[(f64, f64)], half_step: f64, cmp: &mut Comparator<'_, R>) -> (f64, bool) {
    let sign = if cmp.decide(value) { 1.0 } else { -1.0 };
    // Swapping the drive polarity mirrors both the charge and the offset.
    cmp.offset *= sign;
    let magnitude = sign * value + half_step;
    let mut acc_actual = 0.0;
    let mut acc_nominal = 0.0;
    let mut all_set = true;
    for &(actual, nominal) in ladder {
        if cmp.decide(magnitude - acc_actual - actual) {
            acc_actual += actual;
            acc_nominal += nominal;
        } else {
            all_set = false;
        }
    }
    cmp.offset *= sign;
    (sign * acc_nominal, all_set && !ladder.is_empty())
}

/// Runs the estimation procedure. The noise stream is only drawn from in
/// behavioral mode with non-zero comparator noise.
pub fn estimate_mismatch<R: Rng>(array: &HalfSplitArray, rng: &mut R) -> Result<MismatchEstimate> {
    let real = &array.realization;
    let n = real.identity.n0() as usize;
    let c0 = &real.actual[0];
    let c1 = &real.actual[1];
    // c_{1,-1} and c_{1,-2} do not exist; they count as zero weight.
    let lower1 = |j: isize| if j >= 0 { c1[j as usize] } else { 0.0 };
    let full_scale = real.identity.full_scale() as f64;

    let sub_dac: Vec<(f64, f64)> = (1..=array.sub_dac_bits)
        .map(|k| {
            let nominal = (-(k as f64)).exp2();
            (nominal * array.sub_dac_gain, nominal)
        })
        .collect();
    let half_step = match array.sub_dac_bits {
        0 => 0.5,
        b => (-(b as f64) - 1.0).exp2() * array.sub_dac_gain,
    };
    // Lower components available to iteration i, largest first, then the
    // sub-DAC.
    let ladder_below = |i: usize| -> Vec<(f64, f64)> {
        let mut ladder: Vec<(f64, f64)> = Vec::new();
        for p in (1..i).rev() {
            // Binary position p - 1 holds c_{0,p-1} and c_{1,p-2}.
            let q = p - 1;
            ladder.push((c0[q], real.nominal[0][q] as f64));
            if q >= 1 {
                ladder.push((c1[q - 1], real.nominal[1][q - 1] as f64));
            }
        }
        ladder.extend_from_slice(&sub_dac);
        ladder
    };

    let mut overflows = 0;
    let v_co_estimate = match array.measurement_mode {
        MeasurementMode::Ideal => array.comparator_offset,
        MeasurementMode::Behavioral => {
            // Zero differential input: the comparator reads only its offset.
            let mut cmp = Comparator {
                offset: 0.0,
                noise: array.comparator_noise_sigma,
                rng: &mut *rng,
            };
            let (v, overflow) = convert(array.comparator_offset, &ladder_below(n - 1), half_step, &mut cmp);
            overflows += overflow as u32;
            v
        }
    };

    let mut raw_differences = Vec::with_capacity(n - 1);
    for i in 1..n {
        let pair = c0[i - 1] + lower1(i as isize - 2);
        let d0 = c0[i] - pair;
        let d1 = c1[i - 1] - pair;
        let measured = match array.measurement_mode {
            MeasurementMode::Ideal => DifferencePair {
                primary: d0,
                secondary: d1,
            },
            MeasurementMode::Behavioral => {
                let ladder = ladder_below(i);
                let mut cmp = Comparator {
                    offset: array.comparator_offset - v_co_estimate,
                    noise: array.comparator_noise_sigma,
                    rng: &mut *rng,
                };
                let (p, o0) = convert(d0, &ladder, half_step, &mut cmp);
                let (s, o1) = convert(d1, &ladder, half_step, &mut cmp);
                overflows += o0 as u32 + o1 as u32;
                DifferencePair {
                    primary: p,
                    secondary: s,
                }
            }
        };
        raw_differences.push(measured);
    }

    // Recursive integration on the running (biased) estimates.
    let mut e0 = vec![0.0; n];
    let mut e1 = vec![0.0; n - 1];
    for i in 1..n {
        let below = e0[i - 1] + if i >= 2 { e1[i - 2] } else { 0.0 };
        e0[i] = below + raw_differences[i - 1].primary;
        e1[i - 1] = below + raw_differences[i - 1].secondary;
    }

    // The bias is proportional to nominal weight; spreading the total over
    // the nominal weights makes the corrected values sum to zero.
    let total: f64 = e0.iter().chain(&e1).sum();
    let correct = |v: f64, nominal: u64| v - total * nominal as f64 / full_scale;
    let corrected: Vec<Vec<f64>> = vec![
        e0.iter().zip(&real.nominal[0]).map(|(&v, &w)| correct(v, w)).collect(),
        e1.iter().zip(&real.nominal[1]).map(|(&v, &w)| correct(v, w)).collect(),
    ];

    let range = (full_scale + 1.0).max(1.0);
    for (set, values) in corrected.iter().enumerate() {
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() || v.abs() > range {
                return Err(Error::EstimationDiverged {
                    component: format!("c[{set},{index}]"),
                    value: v,
                });
            }
        }
    }

    let format = array.format;
    let mut saturated = Vec::new();
    let eps = corrected
        .iter()
        .enumerate()
        .map(|(set, values)| {
            values
                .iter()
                .enumerate()
                .map(|(index, &v)| {
                    let (raw, sat) = format.encode(v);
                    if sat {
                        saturated.push((set, index));
                    }
                    raw
                })
                .collect()
        })
        .collect();

    Ok(MismatchEstimate {
        identity: real.identity.clone(),
        format,
        eps,
        raw_differences,
        v_co_estimate,
        unquantized: corrected,
        saturated,
        conversion_overflows: overflows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::component::{build_redundant_sets, sample_realization};
    use crate::oracle::relative_mismatch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn array(bits: u32, sigma0: f64, seed: u64, mode: MeasurementMode) -> HalfSplitArray {
        let identity = GeometricIdentity::half_split(bits).unwrap();
        let real = sample_realization(&build_redundant_sets(&identity), sigma0, seed, 0).unwrap();
        let mut a = HalfSplitArray::new(real).unwrap();
        a.measurement_mode = mode;
        a
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn matched_array_reads_zero() {
        for mode in [MeasurementMode::Ideal, MeasurementMode::Behavioral] {
            let est = estimate_mismatch(&array(10, 0.0, 1, mode), &mut rng()).unwrap();
            assert!(est.eps.iter().flatten().all(|&r| r == 0));
            assert!(est
                .raw_differences
                .iter()
                .all(|d| d.primary == 0.0 && d.secondary == 0.0));
            assert_eq!(est.v_co_estimate, 0.0);
        }
    }

    #[test]
    fn ideal_mode_recovers_relative_mismatch() {
        for seed in 0..20 {
            let a = array(14, 0.05, seed, MeasurementMode::Ideal);
            let est = estimate_mismatch(&a, &mut rng()).unwrap();
            let truth: Vec<f64> = relative_mismatch(&a.realization).into_iter().flatten().collect();
            let got = est.unquantized_flat();
            let worst = truth
                .iter()
                .zip(&got)
                .map(|(t, g)| (t - g).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-9, "seed {seed}: {worst}");
            assert!(got.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn behavioral_mode_tracks_truth() {
        let a = array(14, 0.02, 3, MeasurementMode::Behavioral);
        let est = estimate_mismatch(&a, &mut rng()).unwrap();
        let truth: Vec<f64> = relative_mismatch(&a.realization).into_iter().flatten().collect();
        for (t, g) in truth.iter().zip(est.values_flat()) {
            assert!((t - g).abs() < 1.0, "{t} vs {g}");
        }
        assert_eq!(est.conversion_overflows, 0);
    }

    #[test]
    fn offset_is_measured_on_the_sub_dac_grid() {
        let mut a = array(12, 0.0, 9, MeasurementMode::Behavioral);
        a.comparator_offset = 1.3;
        let est = estimate_mismatch(&a, &mut rng()).unwrap();
        assert!((est.v_co_estimate - 1.3).abs() <= 1.0 / 32.0 + 1e-12);
        assert_eq!(est.v_co_estimate * 16.0, (est.v_co_estimate * 16.0).round());
        a.comparator_offset = -0.7;
        let est = estimate_mismatch(&a, &mut rng()).unwrap();
        assert!((est.v_co_estimate + 0.7).abs() <= 1.0 / 32.0 + 1e-12);
    }

    #[test]
    fn storage_saturates_and_reports() {
        let a = array(16, 0.5, 4, MeasurementMode::Ideal);
        let est = estimate_mismatch(&a, &mut rng()).unwrap();
        assert!(!est.saturated.is_empty());
        for &(set, index) in &est.saturated {
            assert!(est.unquantized[set][index].abs() > 31.9);
            assert!(est.eps[set][index] == 511 || est.eps[set][index] == -512);
        }
    }

    #[test]
    fn json_replays_bit_exactly() {
        let a = array(10, 0.03, 5, MeasurementMode::Behavioral);
        let est = estimate_mismatch(&a, &mut rng()).unwrap();
        let json = est.to_json().unwrap();
        assert!(json.contains("\"total_bits\": 10"));
        let back = MismatchEstimate::from_json(&json).unwrap();
        assert_eq!(back, est);
        let bad = json.replacen("\"identity\": \"10x9s1\"", "\"identity\": \"10x8s1\"", 1);
        assert!(MismatchEstimate::from_json(&bad).is_err());
    }
}
