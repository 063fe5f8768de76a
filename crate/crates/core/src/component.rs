//! Component sets, their mismatched realizations and the mapping from
//! assemblies to references.
//!
//! Components are addressed by `(set, index)`; set 0 is the primary set.
//! Internally every component also has a flat index (primary first, then the
//! extra sets in order), which is the bit position used by [`Assembly`].
//!
//! Every component is carved out of one binary position `p` of the
//! conventional `2^p` array: secondary component `c_{k,i}` comes from
//! position `i + N0 - N_k`, and the primary component keeps what is left.
//! The carving is what makes unit-cell sharing between identities possible
//! (see [`UnitCellPool`]).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// Largest primary resolution accepted for an identity.
pub const MAX_RESOLUTION: u32 = 24;
/// Assemblies are 64-bit selectors.
pub const MAX_COMPONENTS: usize = 63;
/// Largest primary resolution for the assembly-count table.
pub const COUNT_PROFILE_MAX_BITS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetSpec {
    pub bits: u32,
    pub scale: u32,
}

/// Design descriptor `N0·(N1,s1)·(N2,s2)…`.
///
/// Text form is `N0xN1sS1[xN2sS2…]`, e.g. `14x13s1`; a bare `N0` is the
/// conventional binary set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GeometricIdentity {
    n0: u32,
    extra_sets: Vec<SetSpec>,
}

impl GeometricIdentity {
    pub fn new(n0: u32, extra_sets: Vec<SetSpec>) -> Result<Self> {
        if n0 == 0 || n0 > MAX_RESOLUTION {
            return Err(Error::validation(format!(
                "primary resolution must be within 1..={MAX_RESOLUTION}, got {n0}"
            )));
        }
        for (k, set) in extra_sets.iter().enumerate() {
            if set.bits < 1 || set.bits > n0 - 1 {
                return Err(Error::validation(format!(
                    "set {}: resolution {} outside 1..={}",
                    k + 1,
                    set.bits,
                    n0 as i64 - 1
                )));
            }
            if set.scale < 1 || set.scale > n0 - set.bits {
                return Err(Error::validation(format!(
                    "set {}: scale {} outside 1..={}",
                    k + 1,
                    set.scale,
                    n0 - set.bits
                )));
            }
        }
        let identity = Self { n0, extra_sets };
        let count = identity.component_count();
        if count > MAX_COMPONENTS {
            return Err(Error::validation(format!(
                "{count} components exceed the {MAX_COMPONENTS}-component selector"
            )));
        }
        if let Some(((set, index), w)) = identity
            .carve()
            .into_iter()
            .find(|(_, w)| *w <= 0)
        {
            return Err(Error::validation(format!(
                "identity {identity} leaves component ({set},{index}) with weight {w}"
            )));
        }
        Ok(identity)
    }

    pub fn binary(bits: u32) -> Result<Self> {
        Self::new(bits, Vec::new())
    }

    /// `N·(N-1, 1)`: every binary weight split into two equal halves.
    pub fn half_split(bits: u32) -> Result<Self> {
        if bits < 2 {
            return Err(Error::validation(format!(
                "half-split array needs at least 2 bits, got {bits}"
            )));
        }
        Self::new(
            bits,
            vec![SetSpec {
                bits: bits - 1,
                scale: 1,
            }],
        )
    }

    pub fn n0(&self) -> u32 {
        self.n0
    }

    pub fn extra_sets(&self) -> &[SetSpec] {
        &self.extra_sets
    }

    pub fn set_count(&self) -> usize {
        1 + self.extra_sets.len()
    }

    pub fn set_len(&self, set: usize) -> usize {
        if set == 0 {
            self.n0 as usize
        } else {
            self.extra_sets[set - 1].bits as usize
        }
    }

    pub fn component_count(&self) -> usize {
        self.n0 as usize + self.extra_sets.iter().map(|s| s.bits as usize).sum::<usize>()
    }

    pub fn is_half_split(&self) -> bool {
        matches!(self.extra_sets.as_slice(), [s] if s.bits + 1 == self.n0 && s.scale == 1)
    }

    /// `2^N0 - 1`.
    pub fn full_scale(&self) -> u64 {
        (1u64 << self.n0) - 1
    }

    /// Flat index of component `(set, index)`.
    pub fn flat_index(&self, set: usize, index: usize) -> usize {
        assert!(index < self.set_len(set), "component ({set},{index}) out of range");
        (0..set).map(|s| self.set_len(s)).sum::<usize>() + index
    }

    /// `(set, index)` of a flat index.
    pub fn component_at(&self, flat: usize) -> (usize, usize) {
        let mut rest = flat;
        for set in 0..self.set_count() {
            let len = self.set_len(set);
            if rest < len {
                return (set, rest);
            }
            rest -= len;
        }
        panic!("flat index {flat} out of range");
    }

    /// Binary position each flat component is carved from.
    pub fn positions(&self) -> Vec<u32> {
        let mut out: Vec<u32> = (0..self.n0).collect();
        for set in &self.extra_sets {
            out.extend((0..set.bits).map(|i| i + self.n0 - set.bits));
        }
        out
    }

    /// Signed carving of nominal weights, flat order, before validation.
    fn carve(&self) -> Vec<((usize, usize), i64)> {
        let mut primary: Vec<i64> = (0..self.n0).map(|i| 1i64 << i).collect();
        let mut extras = Vec::with_capacity(self.extra_sets.len());
        for set in &self.extra_sets {
            let offset = self.n0 - set.bits;
            let weights: Vec<i64> = (0..set.bits)
                .map(|i| 1i64 << (offset + i - set.scale))
                .collect();
            for (i, w) in weights.iter().enumerate() {
                primary[offset as usize + i] -= w;
            }
            extras.push(weights);
        }
        let mut out: Vec<_> = primary
            .into_iter()
            .enumerate()
            .map(|(i, w)| ((0, i), w))
            .collect();
        for (k, weights) in extras.into_iter().enumerate() {
            out.extend(weights.into_iter().enumerate().map(|(i, w)| ((k + 1, i), w)));
        }
        out
    }

    /// Nominal weights per set.
    pub fn nominal_sets(&self) -> Vec<Vec<u64>> {
        let flat = self.nominal_flat();
        let mut out = Vec::with_capacity(self.set_count());
        let mut start = 0;
        for set in 0..self.set_count() {
            let len = self.set_len(set);
            out.push(flat[start..start + len].to_vec());
            start += len;
        }
        out
    }

    pub fn nominal_flat(&self) -> Vec<u64> {
        self.carve().into_iter().map(|(_, w)| w as u64).collect()
    }

    /// Assembly of the conventional binary mapping: bit `p` of `code`
    /// selects every component carved from position `p`.
    pub fn binary_assembly(&self, code: u64) -> Assembly {
        let mut selector = 0u64;
        for (flat, p) in self.positions().into_iter().enumerate() {
            if code >> p & 1 == 1 {
                selector |= 1 << flat;
            }
        }
        Assembly(selector)
    }
}

impl fmt::Display for GeometricIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.n0)?;
        for set in &self.extra_sets {
            write!(f, "x{}s{}", set.bits, set.scale)?;
        }
        Ok(())
    }
}

impl FromStr for GeometricIdentity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation(format!("invalid identity '{s}', expected N0xN1sS1[xN2sS2...]"));
        let mut parts = s.trim().split(['x', 'X']);
        let n0 = parts
            .next()
            .and_then(|p| p.parse::<u32>().ok())
            .ok_or_else(bad)?;
        let mut extra = Vec::new();
        for part in parts {
            let (bits, scale) = part.split_once(['s', 'S']).ok_or_else(bad)?;
            extra.push(SetSpec {
                bits: bits.parse().map_err(|_| bad())?,
                scale: scale.parse().map_err(|_| bad())?,
            });
        }
        Self::new(n0, extra)
    }
}

impl TryFrom<String> for GeometricIdentity {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GeometricIdentity> for String {
    fn from(id: GeometricIdentity) -> String {
        id.to_string()
    }
}

/// Subset selector over the flat component list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assembly(pub u64);

impl Assembly {
    pub const EMPTY: Assembly = Assembly(0);

    pub fn full(count: usize) -> Self {
        Assembly(if count >= 64 { u64::MAX } else { (1u64 << count) - 1 })
    }

    pub fn contains(self, flat: usize) -> bool {
        self.0 >> flat & 1 == 1
    }

    pub fn with(self, flat: usize) -> Self {
        Assembly(self.0 | 1 << flat)
    }

    pub fn without(self, flat: usize) -> Self {
        Assembly(self.0 & !(1 << flat))
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Flat indices in increasing order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(i)
        })
    }

    pub fn fits(self, count: usize) -> bool {
        count >= 64 || self.0 >> count == 0
    }

    /// Nominal sum under `nominal` (flat order).
    pub fn nominal_sum(self, nominal: &[u64]) -> u64 {
        self.indices().map(|i| nominal[i]).sum()
    }
}

/// Where a realization's random draws came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeed {
    pub master: u64,
    pub trial: u64,
}

/// Nominal and actual weights of every component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRealization {
    pub identity: GeometricIdentity,
    pub nominal: Vec<Vec<u64>>,
    pub actual: Vec<Vec<f64>>,
    pub sigma0: f64,
    pub seed: Option<StreamSeed>,
    /// Draws rejected for being non-positive.
    #[serde(default)]
    pub resample_events: u32,
}

impl ComponentRealization {
    /// Nominal-only realization: actual weights equal nominal.
    pub fn nominal(identity: GeometricIdentity) -> Self {
        let nominal = identity.nominal_sets();
        let actual = nominal
            .iter()
            .map(|s| s.iter().map(|&w| w as f64).collect())
            .collect();
        Self {
            identity,
            nominal,
            actual,
            sigma0: 0.0,
            seed: None,
            resample_events: 0,
        }
    }

    pub fn component_count(&self) -> usize {
        self.identity.component_count()
    }

    pub fn nominal_flat(&self) -> Vec<u64> {
        self.nominal.iter().flatten().copied().collect()
    }

    pub fn actual_flat(&self) -> Vec<f64> {
        self.actual.iter().flatten().copied().collect()
    }

    pub fn actual_at(&self, set: usize, index: usize) -> f64 {
        self.actual[set][index]
    }

    /// Replaces the actual weights from a flat list.
    pub fn set_actual_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.component_count());
        let mut it = flat.iter();
        for set in &mut self.actual {
            for w in set.iter_mut() {
                *w = *it.next().unwrap();
            }
        }
    }

    pub fn reference_model(&self) -> ReferenceModel {
        ReferenceModel::new(self.actual_flat(), self.identity.full_scale())
    }

    pub fn validate(&self) -> Result<()> {
        if self.nominal != self.identity.nominal_sets() {
            return Err(Error::validation("nominal weights do not follow the identity"));
        }
        let shape_ok = self.actual.len() == self.nominal.len()
            && self.actual.iter().zip(&self.nominal).all(|(a, n)| a.len() == n.len());
        if !shape_ok {
            return Err(Error::validation("actual weights do not match the component layout"));
        }
        if let Some(w) = self.actual.iter().flatten().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::validation(format!("actual weight {w} is not strictly positive")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        r.validate()?;
        Ok(r)
    }
}

/// `{2^0, …, 2^(N-1)}` as a nominal realization.
pub fn build_binary_set(bits: u32) -> Result<ComponentRealization> {
    Ok(ComponentRealization::nominal(GeometricIdentity::binary(bits)?))
}

pub fn build_redundant_sets(identity: &GeometricIdentity) -> ComponentRealization {
    ComponentRealization::nominal(identity.clone())
}

/// Draws a positive weight from `Normal(w, w·σ0²)`, resampling non-positive
/// draws. Returns the weight and the number of rejected draws.
fn draw_weight<R: Rng>(rng: &mut R, mean: f64, std: f64) -> (f64, u32) {
    let mut rejected = 0;
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let w = mean + std * z;
        if w > 0.0 {
            return (w, rejected);
        }
        rejected += 1;
    }
}

/// Samples actual weights for every component of `nominal`.
///
/// A component of nominal weight `w` is the sum of `w` unit cells, each
/// `Normal(1, σ0²)`, so it is drawn as `Normal(w, w·σ0²)`. Component `k`
/// of trial `t` uses the stream `(master, COMPONENT, t, k)`.
pub fn sample_realization(
    nominal: &ComponentRealization,
    sigma0: f64,
    master: u64,
    trial: u64,
) -> Result<ComponentRealization> {
    if !(sigma0 >= 0.0) || !sigma0.is_finite() {
        return Err(Error::validation(format!("sigma0 must be >= 0, got {sigma0}")));
    }
    let mut out = nominal.clone();
    let mut resampled = 0;
    let weights: Vec<f64> = nominal
        .nominal_flat()
        .into_iter()
        .enumerate()
        .map(|(k, w)| {
            let w = w as f64;
            if sigma0 == 0.0 {
                return w;
            }
            let mut rng = substream(master, &[domain::COMPONENT, trial, k as u64]);
            let (v, r) = draw_weight(&mut rng, w, sigma0 * w.sqrt());
            resampled += r;
            v
        })
        .collect();
    out.set_actual_flat(&weights);
    out.sigma0 = sigma0;
    out.seed = Some(StreamSeed { master, trial });
    out.resample_events = resampled;
    Ok(out)
}

/// Unit cells of a conventional `N0`-bit array, sampled once and shared by
/// every identity carved from it.
///
/// Binary position `p` holds `2^p` cells. A component takes a contiguous
/// run of its position's cells: the primary component first, then each extra
/// set in order. Two identities therefore see the same physical randomness,
/// and every component of `8·(1,1)` is a union of components of `8·(7,1)`.
#[derive(Debug, Clone)]
pub struct UnitCellPool {
    bits: u32,
    sigma0: f64,
    seed: StreamSeed,
    /// Prefix sums of cell weights per position.
    prefix: Vec<Vec<f64>>,
    resample_events: u32,
}

impl UnitCellPool {
    /// Largest array the pool will sample cell by cell.
    pub const MAX_BITS: u32 = 20;

    pub fn sample(bits: u32, sigma0: f64, master: u64, trial: u64) -> Result<Self> {
        if bits == 0 || bits > Self::MAX_BITS {
            return Err(Error::Capacity {
                what: "unit-cell pool bits",
                requested: bits as usize,
                limit: Self::MAX_BITS as usize,
            });
        }
        if !(sigma0 >= 0.0) || !sigma0.is_finite() {
            return Err(Error::validation(format!("sigma0 must be >= 0, got {sigma0}")));
        }
        let mut resample_events = 0;
        let prefix = (0..bits)
            .map(|p| {
                let mut rng = substream(master, &[domain::UNIT_CELL, trial, p as u64]);
                let mut acc = 0.0;
                let mut sums = Vec::with_capacity((1usize << p) + 1);
                sums.push(0.0);
                for _ in 0..1usize << p {
                    let (w, r) = draw_weight(&mut rng, 1.0, sigma0);
                    resample_events += r;
                    acc += w;
                    sums.push(acc);
                }
                sums
            })
            .collect();
        Ok(Self {
            bits,
            sigma0,
            seed: StreamSeed { master, trial },
            prefix,
            resample_events,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Realization of `identity` built from the pooled cells.
    pub fn realize(&self, identity: &GeometricIdentity) -> Result<ComponentRealization> {
        if identity.n0() != self.bits {
            return Err(Error::validation(format!(
                "pool has {} bits, identity {identity} needs {}",
                self.bits,
                identity.n0()
            )));
        }
        let nominal = identity.nominal_flat();
        let mut used = vec![0usize; self.bits as usize];
        let weights: Vec<f64> = identity
            .positions()
            .into_iter()
            .zip(&nominal)
            .map(|(p, &w)| {
                let p = p as usize;
                let start = used[p];
                used[p] += w as usize;
                self.prefix[p][start + w as usize] - self.prefix[p][start]
            })
            .collect();
        let mut out = ComponentRealization::nominal(identity.clone());
        out.set_actual_flat(&weights);
        out.sigma0 = self.sigma0;
        out.seed = Some(self.seed);
        out.resample_events = self.resample_events;
        Ok(out)
    }
}

/// Flat actual weights with the normalization that maps assemblies to
/// references: `θ(X) = (2^N - 1) · ΣX / Σall`.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    weights: Vec<f64>,
    total: f64,
    full_scale: f64,
}

impl ReferenceModel {
    pub fn new(weights: Vec<f64>, full_scale: u64) -> Self {
        let total = weights.iter().sum();
        Self {
            weights,
            total,
            full_scale: full_scale as f64,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of all actual weights.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn full_scale(&self) -> f64 {
        self.full_scale
    }

    /// Actual weight sum of an assembly, summed in flat order.
    pub fn weight_of(&self, assembly: Assembly) -> f64 {
        assembly.indices().map(|i| self.weights[i]).sum()
    }

    /// Reference in LSB. The full assembly sums in the same order as the
    /// total, so it maps to exactly `2^N - 1`.
    pub fn reference(&self, assembly: Assembly) -> f64 {
        self.normalize(self.weight_of(assembly))
    }

    /// Converts an actual weight sum to LSB.
    pub fn normalize(&self, weight: f64) -> f64 {
        self.full_scale * (weight / self.total)
    }
}

/// Reference generated by `assembly` on `real`.
pub fn reference_of(assembly: Assembly, real: &ComponentRealization) -> f64 {
    real.reference_model().reference(assembly)
}

/// Number of assemblies with each nominal sum `0..2^N0`, by subset-sum
/// counting over the nominal weights.
pub fn assembly_count_profile(identity: &GeometricIdentity) -> Result<Vec<u64>> {
    if identity.n0() > COUNT_PROFILE_MAX_BITS {
        return Err(Error::Capacity {
            what: "assembly-count table bits",
            requested: identity.n0() as usize,
            limit: COUNT_PROFILE_MAX_BITS as usize,
        });
    }
    let total = identity.full_scale() as usize;
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for w in identity.nominal_flat() {
        let w = w as usize;
        for s in (w..=total).rev() {
            counts[s] += counts[s - w];
        }
    }
    Ok(counts)
}

/// Variance of `θ_i - i` for binary coding under i.i.d. unit cells:
/// `Σ_j 2^(j-1) |D_j - i/(2^N - 1)| σ0²`.
pub fn theoretical_error_variance(code: u64, bits: u32, sigma0: f64) -> f64 {
    let ratio = code as f64 / ((1u64 << bits) - 1) as f64;
    let s2 = sigma0 * sigma0;
    (0..bits)
        .map(|j| {
            let digit = (code >> j & 1) as f64;
            (j as f64 - 1.0).exp2() * (digit - ratio).abs() * s2
        })
        .sum()
}
