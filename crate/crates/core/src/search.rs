//! Exact minimum-error assembly search.
//!
//! The normalization `θ(X) = K · ΣX / C` has a constant denominator per
//! realization, so the best assembly for code `i` is the subset whose actual
//! weight sum is nearest to `i · C / K`. That is a nearest-subset-sum query,
//! solved exactly by meet-in-the-middle: the subset sums of the low half of
//! the components are sorted once, then every high-half subset is paired with
//! its nearest low-half partner.
//!
//! Ties between equally good assemblies go to the smallest selector value.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::component::{Assembly, ComponentRealization, ReferenceModel};
use crate::error::{Error, Result};

/// Components the search will accept.
pub const MAX_SEARCH_COMPONENTS: usize = 30;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Candidate pairs evaluated.
    pub nodes_explored: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct OptimalReferenceResult {
    /// One assembly per code.
    pub assemblies: Vec<Assembly>,
    /// `|target_i - θ(X_i)|` in LSB.
    pub achieved_error: Vec<f64>,
    pub search_stats: SearchStats,
}

/// Sorted subset sums of one half, equal sums collapsed onto their smallest
/// mask.
struct HalfTable {
    sums: Vec<f64>,
    masks: Vec<u64>,
}

impl HalfTable {
    fn build(weights: &[f64]) -> Self {
        let raw = subset_sums(weights);
        let mut order: Vec<u64> = (0..raw.len() as u64).collect();
        order.sort_by(|&a, &b| raw[a as usize].total_cmp(&raw[b as usize]).then(a.cmp(&b)));
        let mut sums = Vec::with_capacity(order.len());
        let mut masks = Vec::with_capacity(order.len());
        for mask in order {
            let s = raw[mask as usize];
            if sums.last() == Some(&s) {
                continue;
            }
            sums.push(s);
            masks.push(mask);
        }
        Self { sums, masks }
    }

    /// Better of the two neighbours of position `j` for remainder `rem`.
    #[inline]
    fn pick(&self, j: usize, rem: f64) -> (f64, u64) {
        let mut best = (f64::INFINITY, u64::MAX);
        for k in [j.wrapping_sub(1), j] {
            if let Some(&s) = self.sums.get(k) {
                let err = (rem - s).abs();
                let mask = self.masks[k];
                if err < best.0 || (err == best.0 && mask < best.1) {
                    best = (err, mask);
                }
            }
        }
        best
    }
}

fn subset_sums(weights: &[f64]) -> Vec<f64> {
    let n = weights.len();
    let mut sums = vec![0.0; 1 << n];
    for mask in 1usize..1 << n {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + weights[low];
    }
    sums
}

/// Nearest-subset-sum solver over a fixed weight list.
pub struct SubsetSumSolver {
    low_bits: usize,
    low: HalfTable,
    high_sums: Vec<f64>,
}

impl SubsetSumSolver {
    /// `low_bits` components go to the sorted half.
    pub fn new(weights: &[f64], low_bits: usize) -> Result<Self> {
        if weights.len() > MAX_SEARCH_COMPONENTS {
            return Err(Error::Capacity {
                what: "assembly search components",
                requested: weights.len(),
                limit: MAX_SEARCH_COMPONENTS,
            });
        }
        let low_bits = low_bits.min(weights.len());
        Ok(Self {
            low_bits,
            low: HalfTable::build(&weights[..low_bits]),
            high_sums: subset_sums(&weights[low_bits..]),
        })
    }

    /// Subset nearest to `target`; returns the selector and the evaluated
    /// candidate count.
    pub fn nearest(&self, target: f64) -> (Assembly, u64) {
        let mut best = (f64::INFINITY, u64::MAX);
        for (high, &hs) in self.high_sums.iter().enumerate() {
            let rem = target - hs;
            let j = self.low.sums.partition_point(|&s| s < rem);
            let (err, low) = self.low.pick(j, rem);
            if err < best.0 {
                best = (err, (high as u64) << self.low_bits | low);
            }
        }
        (Assembly(best.1), 2 * self.high_sums.len() as u64)
    }

    /// Nearest subsets for ascending `targets`, one sweep per high subset.
    pub fn nearest_sorted(&self, targets: &[f64]) -> (Vec<Assembly>, u64) {
        debug_assert!(targets.windows(2).all(|w| w[0] <= w[1]));
        let mut best = vec![(f64::INFINITY, u64::MAX); targets.len()];
        let mut nodes = 0u64;
        for (high, &hs) in self.high_sums.iter().enumerate() {
            let prefix = (high as u64) << self.low_bits;
            let mut j = 0;
            for (slot, &t) in best.iter_mut().zip(targets) {
                let rem = t - hs;
                while j < self.low.sums.len() && self.low.sums[j] < rem {
                    j += 1;
                }
                let (err, low) = self.low.pick(j, rem);
                if err < slot.0 {
                    *slot = (err, prefix | low);
                }
            }
            nodes += 2 * targets.len() as u64;
        }
        (best.into_iter().map(|(_, sel)| Assembly(sel)).collect(), nodes)
    }
}

fn check_capacity(real: &ComponentRealization) -> Result<()> {
    let count = real.component_count();
    if count > MAX_SEARCH_COMPONENTS {
        return Err(Error::Capacity {
            what: "assembly search components",
            requested: count,
            limit: MAX_SEARCH_COMPONENTS,
        });
    }
    Ok(())
}

/// Target weight sum for an effective reference level in LSB.
fn target_weight(model: &ReferenceModel, level: f64) -> f64 {
    level * model.total() / model.full_scale()
}

/// Minimum-error assembly for one code.
pub fn optimal_assembly(code: u64, real: &ComponentRealization) -> Result<Assembly> {
    check_capacity(real)?;
    let full = real.identity.full_scale();
    if code > full {
        return Err(Error::Range {
            value: code as f64,
            upper: full as f64 + 1.0,
        });
    }
    let model = real.reference_model();
    let count = real.component_count();
    let solver = SubsetSumSolver::new(model.weights(), count.div_ceil(2))?;
    Ok(solver.nearest(target_weight(&model, code as f64)).0)
}

/// Minimum-error assemblies for every code.
pub fn optimal_reference_set(real: &ComponentRealization) -> Result<OptimalReferenceResult> {
    optimal_reference_set_with_offset(real, 0.0)
}

/// Minimum-error assemblies when the comparator shifts every threshold down
/// by `offset` LSB: code `i` targets a reference of `i + offset`.
pub fn optimal_reference_set_with_offset(
    real: &ComponentRealization,
    offset: f64,
) -> Result<OptimalReferenceResult> {
    check_capacity(real)?;
    let start = Instant::now();
    let model = real.reference_model();
    let count = real.component_count();
    let n0 = real.identity.n0() as usize;
    // A larger sorted half makes the per-high-subset sweep cheaper relative
    // to the 2^N0 targets.
    let low_bits = count.div_ceil(2).max(n0.min(22)).min(count);
    let solver = SubsetSumSolver::new(model.weights(), low_bits)?;
    let codes = real.identity.full_scale() + 1;
    let targets: Vec<f64> = (0..codes)
        .map(|i| target_weight(&model, i as f64 + offset))
        .collect();
    let (assemblies, nodes) = solver.nearest_sorted(&targets);
    let achieved_error = assemblies
        .iter()
        .enumerate()
        .map(|(i, &a)| (i as f64 + offset - model.reference(a)).abs())
        .collect();
    Ok(OptimalReferenceResult {
        assemblies,
        achieved_error,
        search_stats: SearchStats {
            nodes_explored: nodes,
            wall_time: start.elapsed(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::component::{build_redundant_sets, sample_realization, GeometricIdentity};

    /// Literal power-set scan.
    fn brute_force(real: &ComponentRealization, code: u64) -> (Assembly, f64) {
        let model = real.reference_model();
        let mut best = (Assembly(0), f64::INFINITY);
        for sel in 0..1u64 << real.component_count() {
            let err = (code as f64 - model.reference(Assembly(sel))).abs();
            if err < best.1 {
                best = (Assembly(sel), err);
            }
        }
        best
    }

    #[test]
    fn zero_sigma_hits_every_code() {
        let real = build_redundant_sets(&"6x5s1".parse().unwrap());
        let res = optimal_reference_set(&real).unwrap();
        assert!(res.achieved_error.iter().all(|&e| e == 0.0));
        let nominal = real.nominal_flat();
        for (i, a) in res.assemblies.iter().enumerate() {
            assert_eq!(a.nominal_sum(&nominal), i as u64);
            // Smallest selector among the exact assemblies.
            let first = (0..1u64 << 11)
                .find(|&s| Assembly(s).nominal_sum(&nominal) == i as u64)
                .unwrap();
            assert_eq!(a.0, first);
        }
    }

    #[test]
    fn endpoints() {
        let n = build_redundant_sets(&"8x7s1".parse().unwrap());
        let real = sample_realization(&n, 0.1, 2, 0).unwrap();
        let res = optimal_reference_set(&real).unwrap();
        assert_eq!(res.assemblies[0], Assembly::EMPTY);
        assert_eq!(res.achieved_error[0], 0.0);
        assert_eq!(res.assemblies[255], Assembly::full(15));
        assert_eq!(res.achieved_error[255], 0.0);
        assert_eq!(optimal_assembly(255, &real).unwrap(), Assembly::full(15));
    }

    #[test]
    fn matches_power_set_scan() {
        let n = build_redundant_sets(&"6x5s1".parse().unwrap());
        let real = sample_realization(&n, 0.1, 17, 3).unwrap();
        let res = optimal_reference_set(&real).unwrap();
        for code in 0..64 {
            let (a, err) = brute_force(&real, code);
            assert_eq!(res.assemblies[code as usize], a, "code {code}");
            assert!((res.achieved_error[code as usize] - err).abs() < 1e-12);
            assert_eq!(optimal_assembly(code, &real).unwrap(), a);
        }
    }

    #[test]
    fn binary_identity_is_bijective() {
        let n = build_redundant_sets(&GeometricIdentity::binary(8).unwrap());
        let real = sample_realization(&n, 0.01, 5, 0).unwrap();
        let res = optimal_reference_set(&real).unwrap();
        for (i, a) in res.assemblies.iter().enumerate() {
            assert_eq!(a.0, i as u64);
        }
    }

    #[test]
    fn capacity_guard() {
        let n = build_redundant_sets(&"16x15s1".parse().unwrap());
        assert!(matches!(
            optimal_reference_set(&n),
            Err(Error::Capacity { requested: 31, .. })
        ));
        assert!(optimal_assembly(3, &n).is_err());
    }

    #[test]
    fn single_and_sweep_agree_with_offset() {
        let n = build_redundant_sets(&"7x6s1".parse().unwrap());
        let real = sample_realization(&n, 0.08, 1, 1).unwrap();
        let res = optimal_reference_set_with_offset(&real, 0.3).unwrap();
        let model = real.reference_model();
        let solver = SubsetSumSolver::new(model.weights(), 6).unwrap();
        for code in [0u64, 1, 40, 64, 100, 127] {
            let (a, _) = solver.nearest((code as f64 + 0.3) * model.total() / 127.0);
            assert_eq!(a, res.assemblies[code as usize]);
        }
    }
}
