//! Behavioral successive-approximation converter.
//!
//! A trial samples one mismatched array and fixes, for every SAR trial code,
//! the reference the configured mode would switch in. Conversions then run
//! the usual MSB-first binary search against that table; the comparator adds
//! its offset and fresh Gaussian noise on every decision.
//!
//! All modes of one `(N, σ0, seed, trial)` share the same half-split
//! realization, so mode comparisons see the same physical array. Binary mode
//! drives both halves of each binary position together.

mod sweep;
mod transfer;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use sweep::{
    enob_estimate, monte_carlo_sweep, quantile_sorted, CellError, CellSummary, EnobSummary, Quartiles,
    SweepCell, SweepRow, SweepTable,
    SWEEP_SCHEMA_VERSION,
};
pub use transfer::{dnl_inl, Linearity, TransferFunction, BISECTION_STEPS_PER_LSB};

use crate::calibration::{
    estimate_mismatch, Calibrator, CompensationRoute, HalfSplitArray, MeasurementMode, MismatchEstimate,
};
use crate::component::{
    build_redundant_sets, sample_realization, ComponentRealization, GeometricIdentity, ReferenceModel,
};
use crate::error::{Error, Result};
use crate::quantizer::ReferenceSet;
use crate::rng::{domain, substream};
use crate::search::{optimal_reference_set_with_offset, MAX_SEARCH_COMPONENTS};

/// Largest resolution the simulator accepts.
pub const MAX_ADC_BITS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConversionMode {
    /// Conventional binary assembly, no calibration.
    Binary,
    /// Estimated mismatch plus mapping & compensation.
    HeuristicCalibrated,
    /// Exact minimum-error assemblies with the mismatch known a priori.
    OracleOptimal,
}

impl ConversionMode {
    pub const ALL: [ConversionMode; 3] = [
        ConversionMode::Binary,
        ConversionMode::HeuristicCalibrated,
        ConversionMode::OracleOptimal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConversionMode::Binary => "binary",
            ConversionMode::HeuristicCalibrated => "heuristic-calibrated",
            ConversionMode::OracleOptimal => "oracle-optimal",
        }
    }
}

impl std::fmt::Display for ConversionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ConversionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "binary" => Ok(ConversionMode::Binary),
            "heuristic" | "heuristic-calibrated" => Ok(ConversionMode::HeuristicCalibrated),
            "oracle" | "oracle-optimal" => Ok(ConversionMode::OracleOptimal),
            other => Err(Error::validation(format!("unknown conversion mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub bits: u32,
    pub mode: ConversionMode,
    pub sigma0: f64,
    pub sigma0_bridge: f64,
    /// Comparator offset, LSB.
    pub v_co: f64,
    /// Per-decision comparator noise, LSB.
    pub comparator_noise_sigma: f64,
    pub seed: u64,
}

impl AdcConfig {
    pub fn new(bits: u32, mode: ConversionMode, sigma0: f64, seed: u64) -> Self {
        Self {
            bits,
            mode,
            sigma0,
            sigma0_bridge: 0.0,
            v_co: 0.0,
            comparator_noise_sigma: 0.0,
            seed,
        }
    }

    pub fn with_mode(self, mode: ConversionMode) -> Self {
        Self { mode, ..self }
    }

    /// Array the converter is built on: half-split from 2 bits up.
    pub fn identity(&self) -> Result<GeometricIdentity> {
        if self.bits >= 2 {
            GeometricIdentity::half_split(self.bits)
        } else {
            GeometricIdentity::binary(self.bits)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > MAX_ADC_BITS {
            return Err(Error::validation(format!(
                "ADC resolution must be within 1..={MAX_ADC_BITS}, got {}",
                self.bits
            )));
        }
        for (name, v) in [
            ("sigma0", self.sigma0),
            ("sigma0_bridge", self.sigma0_bridge),
            ("comparator_noise_sigma", self.comparator_noise_sigma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !self.v_co.is_finite() {
            return Err(Error::validation("comparator offset must be finite"));
        }
        if self.mode != ConversionMode::Binary && self.bits < 2 {
            return Err(Error::validation(format!(
                "{} mode needs at least 2 bits",
                self.mode
            )));
        }
        if self.mode == ConversionMode::OracleOptimal {
            let count = 2 * self.bits as usize - 1;
            if count > MAX_SEARCH_COMPONENTS {
                return Err(Error::Capacity {
                    what: "assembly search components",
                    requested: count,
                    limit: MAX_SEARCH_COMPONENTS,
                });
            }
        }
        Ok(())
    }
}

/// How often each compensation route was taken over all trial codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteCounts {
    pub none: u64,
    pub add: u64,
    pub remove: u64,
    pub opposite_branch: u64,
    pub saturated: u64,
    pub shortfall: u64,
}

/// Bits of the array below this position form the LSB section behind the
/// bridge capacitor.
pub fn lsb_section_bits(bits: u32) -> u32 {
    bits / 2
}

/// One sampled converter.
#[derive(Debug, Clone)]
pub struct AdcTrial {
    cfg: AdcConfig,
    trial: u64,
    realization: ComponentRealization,
    model: ReferenceModel,
    estimate: Option<MismatchEstimate>,
    /// Reference switched in for each SAR trial code; entry 0 is unused.
    references: Vec<f64>,
    routes: RouteCounts,
    noise: ChaCha8Rng,
}

impl AdcTrial {
    pub fn new(cfg: &AdcConfig, trial: u64) -> Result<Self> {
        cfg.validate()?;
        let identity = cfg.identity()?;
        let mut realization =
            sample_realization(&build_redundant_sets(&identity), cfg.sigma0, cfg.seed, trial)?;
        let bridge_gain = if cfg.sigma0_bridge > 0.0 {
            let mut rng = substream(cfg.seed, &[domain::BRIDGE, trial]);
            let z: f64 = rng.sample(StandardNormal);
            (1.0 + cfg.sigma0_bridge * z).max(f64::MIN_POSITIVE)
        } else {
            1.0
        };
        if bridge_gain != 1.0 {
            let split = lsb_section_bits(cfg.bits);
            let scaled: Vec<f64> = identity
                .positions()
                .iter()
                .zip(realization.actual_flat())
                .map(|(&p, w)| if p < split { w * bridge_gain } else { w })
                .collect();
            realization.set_actual_flat(&scaled);
        }
        let model = realization.reference_model();
        let codes = 1usize << cfg.bits;
        let mut routes = RouteCounts::default();
        let mut estimate = None;

        let references: Vec<f64> = match cfg.mode {
            ConversionMode::Binary => (0..codes as u64)
                .map(|c| model.reference(identity.binary_assembly(c)))
                .collect(),
            ConversionMode::HeuristicCalibrated => {
                let mut array = HalfSplitArray::new(realization.clone())?;
                array.sub_dac_gain = bridge_gain;
                array.comparator_offset = cfg.v_co;
                array.comparator_noise_sigma = cfg.comparator_noise_sigma;
                array.measurement_mode = MeasurementMode::Behavioral;
                let mut rng = substream(cfg.seed, &[domain::ESTIMATION_NOISE, trial]);
                let est = estimate_mismatch(&array, &mut rng)?;
                let cal = Calibrator::new(&est)?;
                let refs = (0..codes as u64)
                    .map(|c| {
                        let a = cal.assembly(c);
                        match a.route {
                            CompensationRoute::None => routes.none += 1,
                            CompensationRoute::Add => routes.add += 1,
                            CompensationRoute::Remove => routes.remove += 1,
                            CompensationRoute::OppositeBranch => routes.opposite_branch += 1,
                        }
                        routes.saturated += a.saturated as u64;
                        routes.shortfall += (a.shortfall > 0) as u64;
                        a.reference(&model)
                    })
                    .collect();
                estimate = Some(est);
                refs
            }
            ConversionMode::OracleOptimal => {
                let res = optimal_reference_set_with_offset(&realization, cfg.v_co)?;
                res.assemblies.iter().map(|&a| model.reference(a)).collect()
            }
        };

        Ok(Self {
            cfg: *cfg,
            trial,
            realization,
            model,
            estimate,
            references,
            routes,
            noise: substream(cfg.seed, &[domain::CONVERSION_NOISE, trial]),
        })
    }

    pub fn config(&self) -> &AdcConfig {
        &self.cfg
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    pub fn realization(&self) -> &ComponentRealization {
        &self.realization
    }

    pub fn model(&self) -> &ReferenceModel {
        &self.model
    }

    pub fn estimate(&self) -> Option<&MismatchEstimate> {
        self.estimate.as_ref()
    }

    pub fn routes(&self) -> RouteCounts {
        self.routes
    }

    /// Reference switched in when the SAR tries `code`.
    pub fn reference(&self, code: u64) -> f64 {
        self.references[code as usize]
    }

    /// Input level at which the comparator flips for trial code `code`.
    pub fn effective_threshold(&self, code: u64) -> f64 {
        self.references[code as usize] - self.cfg.v_co
    }

    /// Thresholds the converter realizes, with the comparator offset folded
    /// in.
    pub fn reference_set(&self) -> ReferenceSet {
        let codes = 1usize << self.cfg.bits;
        let mut t = Vec::with_capacity(codes + 1);
        t.push(0.0);
        t.extend((1..codes as u64).map(|c| self.effective_threshold(c)));
        t.push(codes as f64);
        ReferenceSet::new(self.cfg.bits, t).expect("thresholds are finite and pinned")
    }

    /// One conversion of `x` (LSB).
    pub fn sar_convert(&mut self, x: f64) -> Result<u64> {
        let upper = (1u64 << self.cfg.bits) as f64;
        if !(0.0..upper).contains(&x) {
            return Err(Error::Range { value: x, upper });
        }
        let noise = self.cfg.comparator_noise_sigma;
        let mut code = 0u64;
        for k in (0..self.cfg.bits).rev() {
            let trial = code | 1 << k;
            let n = if noise > 0.0 {
                noise * self.noise.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            if x + self.cfg.v_co + n >= self.references[trial as usize] {
                code = trial;
            }
        }
        Ok(code)
    }

    /// Conversion with the noise switched off.
    pub fn convert_noiseless(&self, x: f64) -> u64 {
        let mut code = 0u64;
        for k in (0..self.cfg.bits).rev() {
            let trial = code | 1 << k;
            if x + self.cfg.v_co >= self.references[trial as usize] {
                code = trial;
            }
        }
        code
    }

    /// Measured code edges.
    pub fn transfer_function(&mut self) -> TransferFunction {
        if self.cfg.comparator_noise_sigma > 0.0 {
            transfer::servo_edges(self)
        } else {
            transfer::exact_edges(self)
        }
    }
}

/// Single conversion with a freshly built trial.
pub fn sar_convert(x: f64, cfg: &AdcConfig, trial: u64) -> Result<u64> {
    AdcTrial::new(cfg, trial)?.sar_convert(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matched_converter_floors() {
        for bits in 1..=10 {
            let mut t = AdcTrial::new(&AdcConfig::new(bits, ConversionMode::Binary, 0.0, 1), 0).unwrap();
            let top = (1u64 << bits) as f64;
            let mut x = 0.0;
            while x < top {
                assert_eq!(t.sar_convert(x).unwrap(), x.floor() as u64);
                x += 0.25;
            }
            assert!(t.sar_convert(top).is_err());
            assert!(t.sar_convert(-0.25).is_err());
        }
    }

    #[test]
    fn matched_modes_agree() {
        for mode in ConversionMode::ALL {
            let mut t = AdcTrial::new(&AdcConfig::new(8, mode, 0.0, 3), 0).unwrap();
            for k in 0..1024 {
                let x = k as f64 * 0.25;
                assert_eq!(t.sar_convert(x).unwrap(), x.floor() as u64, "{mode} x={x}");
            }
        }
    }

    #[test]
    fn binary_mode_matches_threshold_partition() {
        let mut checked = 0;
        for trial in 0..20 {
            let mut t = AdcTrial::new(&AdcConfig::new(8, ConversionMode::Binary, 0.01, 5), trial).unwrap();
            let refs = t.reference_set();
            if !refs.is_monotone() {
                continue;
            }
            checked += 1;
            for k in 0..4096 {
                let x = k as f64 / 16.0 + 1.0 / 64.0;
                assert_eq!(t.sar_convert(x).unwrap(), refs.quantize(x).unwrap());
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn config_validation() {
        let ok = AdcConfig::new(10, ConversionMode::OracleOptimal, 0.1, 1);
        assert!(ok.validate().is_ok());
        let big = AdcConfig::new(16, ConversionMode::OracleOptimal, 0.1, 1);
        assert!(matches!(big.validate(), Err(Error::Capacity { .. })));
        assert!(AdcConfig::new(1, ConversionMode::HeuristicCalibrated, 0.1, 1).validate().is_err());
        assert!(AdcConfig::new(0, ConversionMode::Binary, 0.1, 1).validate().is_err());
        assert!(AdcConfig::new(8, ConversionMode::Binary, -0.1, 1).validate().is_err());
    }

    #[test]
    fn offset_is_compensated_by_calibration() {
        let mut cfg = AdcConfig::new(10, ConversionMode::HeuristicCalibrated, 0.0, 2);
        cfg.v_co = 2.4;
        let t = AdcTrial::new(&cfg, 0).unwrap();
        for code in [1u64, 100, 511, 1000] {
            assert!((t.effective_threshold(code) - code as f64).abs() <= 0.5 + 1.0 / 32.0);
        }
        let b = AdcTrial::new(&cfg.with_mode(ConversionMode::Binary), 0).unwrap();
        assert!((b.effective_threshold(100) - 97.6).abs() < 1e-9);
    }

    #[test]
    fn noise_is_reproducible() {
        let mut cfg = AdcConfig::new(8, ConversionMode::Binary, 0.02, 4);
        cfg.comparator_noise_sigma = 0.3;
        let run = || {
            let mut t = AdcTrial::new(&cfg, 1).unwrap();
            (0..200).map(|k| t.sar_convert(k as f64 * 1.27).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bridge_error_scales_lsb_section() {
        let mut cfg = AdcConfig::new(8, ConversionMode::Binary, 0.0, 6);
        cfg.sigma0_bridge = 0.05;
        let t = AdcTrial::new(&cfg, 0).unwrap();
        let a = t.realization().actual_flat();
        let gain = a[0];
        assert!(gain != 1.0);
        for (p, w) in t.realization().identity.positions().iter().zip(&a) {
            let nominal = if *p == 0 { 1.0 } else { (1u64 << (p - 1)) as f64 };
            let expected = if *p < 4 { nominal * gain } else { nominal };
            assert!((w - expected).abs() < 1e-12);
        }
    }
}
