//! Two-phase assembly heuristic: mapping & shifting, then residual
//! compensation with the idle low-order secondary components.

use serde::{Deserialize, Serialize};

use super::estimate::MismatchEstimate;
use crate::component::{Assembly, GeometricIdentity, ReferenceModel};
use crate::error::{Error, Result};

/// Secondary components `c_{1,0} … c_{1,5}` form the compensation pool.
pub const COMPENSATION_POOL_SIZE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompensationRoute {
    /// Residual rounds to zero.
    None,
    /// Idle pool components added on the converting branch.
    Add,
    /// Pool components already selected by phase 1 dropped again.
    Remove,
    /// Pool components of the opposite differential branch switched in,
    /// lowering the reference.
    OppositeBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedAssembly {
    pub phase1: Assembly,
    /// Pool components used by the compensation; how they act depends on
    /// `route`.
    pub compensation: Assembly,
    pub route: CompensationRoute,
    /// Estimated residual before compensation, LSB.
    pub residual: f64,
    /// The residual needed more than the whole pool.
    pub saturated: bool,
    /// Nominal LSB the pool could not supply.
    pub shortfall: u64,
}

impl CalibratedAssembly {
    /// Components switched on the converting branch.
    pub fn main_branch(&self) -> Assembly {
        match self.route {
            CompensationRoute::Add => Assembly(self.phase1.0 | self.compensation.0),
            CompensationRoute::Remove => Assembly(self.phase1.0 & !self.compensation.0),
            CompensationRoute::None | CompensationRoute::OppositeBranch => self.phase1,
        }
    }

    /// Pool components switched on the opposite branch.
    pub fn opposite_branch(&self) -> Assembly {
        match self.route {
            CompensationRoute::OppositeBranch => self.compensation,
            _ => Assembly::EMPTY,
        }
    }

    /// Reference produced on `model`, LSB. The opposite branch is taken to
    /// mirror the converting branch component for component.
    pub fn reference(&self, model: &ReferenceModel) -> f64 {
        let main = model.weight_of(self.main_branch());
        let opposite = self.opposite_branch();
        if opposite.is_empty() {
            model.normalize(main)
        } else {
            model.normalize(main - model.weight_of(opposite))
        }
    }
}

/// Greedy component order and compensation pool for a half-split identity.
#[derive(Debug, Clone)]
pub struct MappingPlan {
    identity: GeometricIdentity,
    /// `(flat, nominal)` by descending weight; primary before secondary at
    /// equal weight, higher index first within a set.
    order: Vec<(usize, u64)>,
    /// `(flat, nominal)` of the pool, largest first.
    pool: Vec<(usize, u64)>,
}

impl MappingPlan {
    pub fn new(identity: &GeometricIdentity) -> Result<Self> {
        if !identity.is_half_split() {
            return Err(Error::validation(format!(
                "mapping & shifting needs a half-split identity, got {identity}"
            )));
        }
        let nominal = identity.nominal_flat();
        let mut order: Vec<(usize, u64)> = nominal.iter().copied().enumerate().collect();
        order.sort_by_key(|&(flat, w)| {
            let (set, index) = identity.component_at(flat);
            (std::cmp::Reverse(w), set, std::cmp::Reverse(index))
        });
        let pool_len = COMPENSATION_POOL_SIZE.min(identity.set_len(1));
        let pool = (0..pool_len)
            .rev()
            .map(|j| {
                let flat = identity.flat_index(1, j);
                (flat, nominal[flat])
            })
            .collect();
        Ok(Self {
            identity: identity.clone(),
            order,
            pool,
        })
    }

    pub fn identity(&self) -> &GeometricIdentity {
        &self.identity
    }

    /// Pool components as `(flat, nominal)`, largest first.
    pub fn pool(&self) -> &[(usize, u64)] {
        &self.pool
    }

    pub fn pool_capacity(&self) -> u64 {
        self.pool.iter().map(|&(_, w)| w).sum()
    }

    /// Phase 1: largest unused component that still fits, until the code is
    /// spelled out exactly.
    pub fn map(&self, code: u64) -> Assembly {
        assert!(code <= self.identity.full_scale(), "code {code} out of range");
        let mut rest = code;
        let mut selector = 0u64;
        for &(flat, w) in &self.order {
            if rest == 0 {
                break;
            }
            if w <= rest {
                selector |= 1 << flat;
                rest -= w;
            }
        }
        debug_assert_eq!(rest, 0, "greedy mapping left {rest} for code {code}");
        Assembly(selector)
    }

    /// Phase 2: cancel `residual` with pool components.
    pub fn compensate(&self, phase1: Assembly, residual: f64) -> CalibratedAssembly {
        let capacity = self.pool_capacity();
        let wanted = residual.abs().round() as u64;
        let saturated = wanted > capacity;
        let need = wanted.min(capacity);
        let mut out = CalibratedAssembly {
            phase1,
            compensation: Assembly::EMPTY,
            route: CompensationRoute::None,
            residual,
            saturated,
            shortfall: wanted - need,
        };
        if need == 0 {
            return out;
        }
        if residual < 0.0 {
            // Reference too low: switch in idle pool components.
            let (sel, left) = greedy(self.pool.iter().filter(|(f, _)| !phase1.contains(*f)), need);
            out.compensation = sel;
            out.route = CompensationRoute::Add;
            out.shortfall += left;
            return out;
        }
        // Reference too high: drop pool components phase 1 selected, or
        // lower the reference from the opposite branch.
        let (sel, left) = greedy(self.pool.iter().filter(|(f, _)| phase1.contains(*f)), need);
        if left == 0 {
            out.compensation = sel;
            out.route = CompensationRoute::Remove;
        } else {
            let (sel, left) = greedy(self.pool.iter(), need);
            out.compensation = sel;
            out.route = CompensationRoute::OppositeBranch;
            out.shortfall += left;
        }
        out
    }
}

fn greedy<'a>(candidates: impl Iterator<Item = &'a (usize, u64)>, need: u64) -> (Assembly, u64) {
    let mut rest = need;
    let mut sel = Assembly::EMPTY;
    for &(flat, w) in candidates {
        if w <= rest {
            sel = sel.with(flat);
            rest -= w;
        }
    }
    (sel, rest)
}

/// Phase-1 assembly for `code` on a half-split identity.
pub fn map_and_shift(code: u64, identity: &GeometricIdentity) -> Result<Assembly> {
    if code > identity.full_scale() {
        return Err(Error::Range {
            value: code as f64,
            upper: identity.full_scale() as f64 + 1.0,
        });
    }
    Ok(MappingPlan::new(identity)?.map(code))
}

/// Estimated error of `phase1` including the comparator offset:
/// `Σ ε̂ over the selection - V_CO`.
pub fn residual_error(phase1: Assembly, est: &MismatchEstimate, v_co: f64) -> f64 {
    let eps = est.values_flat();
    phase1.indices().map(|i| eps[i]).sum::<f64>() - v_co
}

pub fn compensate_residual(
    phase1: Assembly,
    residual: f64,
    identity: &GeometricIdentity,
) -> Result<CalibratedAssembly> {
    Ok(MappingPlan::new(identity)?.compensate(phase1, residual))
}

/// Both phases for one code, using the estimate's stored offset.
pub fn calibrated_assembly(code: u64, est: &MismatchEstimate) -> Result<CalibratedAssembly> {
    Ok(Calibrator::new(est)?.assembly(code))
}

/// Decoded estimate plus mapping plan, reusable across codes.
#[derive(Debug, Clone)]
pub struct Calibrator {
    plan: MappingPlan,
    eps: Vec<f64>,
    v_co: f64,
}

impl Calibrator {
    pub fn new(est: &MismatchEstimate) -> Result<Self> {
        est.validate()?;
        Ok(Self {
            plan: MappingPlan::new(&est.identity)?,
            eps: est.values_flat(),
            v_co: est.v_co_estimate,
        })
    }

    pub fn plan(&self) -> &MappingPlan {
        &self.plan
    }

    pub fn assembly(&self, code: u64) -> CalibratedAssembly {
        let phase1 = self.plan.map(code);
        let residual = phase1.indices().map(|i| self.eps[i]).sum::<f64>() - self.v_co;
        self.plan.compensate(phase1, residual)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{estimate_mismatch, HalfSplitArray};
    use crate::component::{build_redundant_sets, sample_realization};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hs(bits: u32) -> GeometricIdentity {
        GeometricIdentity::half_split(bits).unwrap()
    }

    fn zero_estimate(bits: u32) -> MismatchEstimate {
        let a = HalfSplitArray::new(build_redundant_sets(&hs(bits))).unwrap();
        estimate_mismatch(&a, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn mapping_examples() {
        let id = hs(14);
        assert_eq!(map_and_shift(0, &id).unwrap(), Assembly::EMPTY);
        let a = map_and_shift(1 << 13, &id).unwrap();
        let expected = Assembly::EMPTY.with(id.flat_index(0, 13)).with(id.flat_index(1, 12));
        assert_eq!(a, expected);
        assert_eq!(map_and_shift(16383, &id).unwrap(), Assembly::full(27));
        assert!(map_and_shift(16384, &id).is_err());
        assert!(map_and_shift(3, &"8x6s1".parse().unwrap()).is_err());
    }

    #[test]
    fn mapping_spells_every_code_exactly() {
        for bits in 2..=12 {
            let id = hs(bits);
            let plan = MappingPlan::new(&id).unwrap();
            let nominal = id.nominal_flat();
            for code in 0..=id.full_scale() {
                assert_eq!(plan.map(code).nominal_sum(&nominal), code, "{bits} bits, code {code}");
            }
        }
    }

    #[test]
    fn mapping_keeps_pool_idle_below_three_quarters() {
        let id = hs(14);
        let plan = MappingPlan::new(&id).unwrap();
        for code in (0..12288).step_by(7) {
            let a = plan.map(code);
            assert!(plan.pool().iter().all(|&(f, _)| !a.contains(f)), "code {code}");
        }
    }

    #[test]
    fn compensation_examples() {
        let id = hs(14);
        let phase1 = map_and_shift(1000, &id).unwrap();
        let c = compensate_residual(phase1, 0.0, &id).unwrap();
        assert_eq!(c.route, CompensationRoute::None);
        assert_eq!(c.main_branch(), phase1);

        let c = compensate_residual(phase1, -5.3, &id).unwrap();
        assert_eq!(c.route, CompensationRoute::Add);
        let expected = Assembly::EMPTY.with(id.flat_index(1, 0)).with(id.flat_index(1, 2));
        assert_eq!(c.compensation, expected);
        assert_eq!(c.shortfall, 0);

        let c = compensate_residual(phase1, 4.6, &id).unwrap();
        assert_eq!(c.route, CompensationRoute::OppositeBranch);
        assert_eq!(c.compensation.nominal_sum(&id.nominal_flat()), 5);

        let c = compensate_residual(phase1, -70.0, &id).unwrap();
        assert!(c.saturated);
        assert_eq!(c.compensation.nominal_sum(&id.nominal_flat()), 63);
        assert_eq!(c.shortfall, 7);
    }

    #[test]
    fn positive_residual_prefers_removal() {
        let id = hs(14);
        let nominal = id.nominal_flat();
        let phase1 = map_and_shift(16383, &id).unwrap();
        let c = compensate_residual(phase1, 3.2, &id).unwrap();
        assert_eq!(c.route, CompensationRoute::Remove);
        assert_eq!(c.main_branch().nominal_sum(&nominal), 16380);
        // All pool busy: nothing left to add.
        let c = compensate_residual(phase1, -3.0, &id).unwrap();
        assert_eq!(c.route, CompensationRoute::Add);
        assert_eq!(c.shortfall, 3);
        assert!(c.compensation.is_empty());
    }

    #[test]
    fn residual_examples() {
        let id = hs(14);
        let real = sample_realization(&build_redundant_sets(&id), 0.03, 8, 0).unwrap();
        let est = estimate_mismatch(
            &HalfSplitArray::new(real).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(residual_error(Assembly::EMPTY, &est, 0.0), 0.0);
        let all = residual_error(Assembly::full(27), &est, 0.0);
        assert!(all.abs() <= 27.0 / 32.0, "{all}");
        let msb = Assembly::EMPTY.with(id.flat_index(0, 13));
        assert_eq!(residual_error(msb, &est, 0.25), est.value(0, 13) - 0.25);
    }

    #[test]
    fn matched_array_needs_no_compensation() {
        let est = zero_estimate(10);
        let cal = Calibrator::new(&est).unwrap();
        for code in 0..1024 {
            let c = cal.assembly(code);
            assert_eq!(c.route, CompensationRoute::None);
            assert_eq!(c.residual, 0.0);
            assert_eq!(c.main_branch(), map_and_shift(code, &est.identity).unwrap());
            assert_eq!(calibrated_assembly(code, &est).unwrap(), c);
        }
    }
}
