//! The numbered acceptance checks. Each returns a report instead of
//! panicking so that `redsense verify` and the test suite can print every
//! line before deciding.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc::{monte_carlo_sweep, AdcConfig, AdcTrial, ConversionMode, Quartiles, SweepCell};
use crate::calibration::{
    estimate_mismatch, Calibrator, CompensationRoute, HalfSplitArray, MeasurementMode,
};
use crate::component::{
    assembly_count_profile, build_binary_set, build_redundant_sets, sample_realization,
    theoretical_error_variance, GeometricIdentity, SetSpec,
};
use crate::experiment::{binary_error_statistics, sweep_csv_bytes};
use crate::oracle;
use crate::quantizer::ReferenceSet;

/// Largest `|ε̂ - ε|` allowed for exact (ideal, unquantized) estimation.
/// The recursion and bias correction are exact in real arithmetic, so only
/// rounding remains.
pub const IDEAL_ESTIMATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceOptions {
    pub seed: u64,
    /// Re-run the determinism check with a different seed; the check must
    /// then fail.
    pub tamper_seed: bool,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            seed: 20_240_917,
            tamper_seed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(with = "secs")]
    pub elapsed: Duration,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

impl std::fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {}: {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

pub const CRITERIA: [u32; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

pub fn run(id: u32, opts: &AcceptanceOptions) -> Option<CriterionReport> {
    let start = Instant::now();
    let (name, outcome) = match id {
        1 => ("shannon limit", shannon_limit()),
        2 => ("entropy degeneration", entropy_degeneration(opts.seed)),
        3 => ("mismatch suppression", mismatch_suppression(opts.seed)),
        4 => ("mid-range error concentration", error_concentration(opts.seed)),
        5 => ("redundancy accounting", redundancy_accounting()),
        6 => ("half-split reproduction", half_split_reproduction()),
        7 => ("estimation fidelity", estimation_fidelity(opts.seed)),
        8 => ("heuristic vs oracle", heuristic_vs_oracle(opts.seed)),
        9 => ("linearity gain", linearity_gain(opts.seed)),
        10 => ("effective-resolution gain", resolution_gain(opts.seed)),
        11 => ("determinism", determinism(opts)),
        _ => return None,
    };
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = outcome;
    if let Some(limit) = runtime_limit(id) {
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!("; exceeded runtime limit {}s", limit.as_secs()));
        }
    }
    Some(CriterionReport {
        id,
        name: name.to_string(),
        passed,
        detail,
        elapsed,
    })
}

pub fn run_all(opts: &AcceptanceOptions) -> Vec<CriterionReport> {
    CRITERIA.iter().filter_map(|&id| run(id, opts)).collect()
}

fn runtime_limit(id: u32) -> Option<Duration> {
    match id {
        1 => Some(Duration::from_secs(1)),
        2 | 5 => Some(Duration::from_secs(60)),
        3 => Some(Duration::from_secs(300)),
        _ => None,
    }
}

type Outcome = (bool, String);

fn median(values: &[f64]) -> f64 {
    Quartiles::of(values).map_or(f64::NAN, |q| q.median)
}

fn shannon_limit() -> Outcome {
    let mut worst: f64 = 0.0;
    for bits in 1..=20 {
        let refs = ReferenceSet::ideal(bits).expect("ideal set");
        worst = worst.max((refs.metrics().entropy - bits as f64).abs());
        let via_sets = build_binary_set(bits).expect("binary set");
        let model = via_sets.reference_model();
        let thresholds: Vec<f64> = (0..=1u64 << bits)
            .map(|c| {
                if c == 1 << bits {
                    c as f64
                } else {
                    model.reference(via_sets.identity.binary_assembly(c))
                }
            })
            .collect();
        let h = ReferenceSet::new(bits, thresholds).expect("pinned").metrics().entropy;
        worst = worst.max((h - bits as f64).abs());
    }
    (worst <= 1e-9, format!("max |H - N| = {worst:.3e} over N = 1..20"))
}

fn entropy_degeneration(seed: u64) -> Outcome {
    let base = AdcConfig::new(0, ConversionMode::Binary, 0.10, seed);
    let bits = [8u32, 12, 16];
    let cells: Vec<SweepCell> = bits
        .iter()
        .map(|&b| SweepCell { bits: b, sigma0: 0.10, mode: ConversionMode::Binary })
        .collect();
    let table = match monte_carlo_sweep(&base, &cells, 500, false) {
        Ok(t) => t,
        Err(e) => return (false, e.to_string()),
    };
    let gaps: Vec<f64> = table
        .summaries(&cells)
        .iter()
        .map(|s| s.cell.bits as f64 - s.entropy.median)
        .collect();
    let ok = gaps.len() == 3 && gaps.windows(2).all(|w| w[1] > w[0]);
    (
        ok,
        format!(
            "median N - H at N = 8, 12, 16: {}",
            gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn mismatch_suppression(seed: u64) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n0 in [8u32, 10] {
        let cfg = AdcConfig::new(n0, ConversionMode::OracleOptimal, 0.10, seed);
        let mqr: Result<Vec<f64>, _> = (0..100u64)
            .into_par_iter()
            .map(|t| AdcTrial::new(&cfg, t).map(|a| a.reference_set().metrics().mqr))
            .collect();
        match mqr {
            Ok(v) => {
                let m = median(&v);
                ok &= m < 1.0;
                parts.push(format!("N0={n0}: median MQR {m:.3}"));
            }
            Err(e) => return (false, e.to_string()),
        }
    }
    (ok, parts.join("; "))
}

fn error_concentration(seed: u64) -> Outcome {
    const BITS: u32 = 16;
    const SIGMA0: f64 = 0.10;
    let stats = match binary_error_statistics(BITS, SIGMA0, 10_000, seed) {
        Ok(s) => s,
        Err(e) => return (false, e.to_string()),
    };
    let codes = 1usize << BITS;
    let mut worst: f64 = 0.0;
    for i in codes / 4..3 * codes / 4 {
        let theory = theoretical_error_variance(i as u64, BITS, SIGMA0);
        worst = worst.max((stats.variance[i] - theory).abs() / theory);
    }
    let ends = [stats.variance[0], stats.variance[codes - 1]];
    let ok = worst <= 0.10 && ends == [0.0, 0.0];
    (
        ok,
        format!(
            "max relative variance error over middle quartiles {:.2}%; Var at ends {:?}",
            worst * 100.0,
            ends
        ),
    )
}

fn redundancy_accounting() -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for n1 in 1..8u32 {
        for s1 in 1..=8 - n1 {
            let id = GeometricIdentity::new(8, vec![SetSpec { bits: n1, scale: s1 }]);
            let Ok(id) = id else { continue };
            let counts = match assembly_count_profile(&id) {
                Ok(c) => c,
                Err(e) => return (false, e.to_string()),
            };
            checked += 1;
            let total: u64 = counts.iter().sum();
            let symmetric = counts.iter().eq(counts.iter().rev());
            if total != 1u64 << (8 + n1) || !symmetric {
                failures.push(id.to_string());
            }
        }
    }
    let mut enumerated = 0;
    for n0 in 2..=6u32 {
        for n1 in 1..n0 {
            for s1 in 1..=n0 - n1 {
                let Ok(id) = GeometricIdentity::new(n0, vec![SetSpec { bits: n1, scale: s1 }]) else {
                    continue;
                };
                enumerated += 1;
                if assembly_count_profile(&id).ok() != Some(oracle::enumerate_assembly_counts(&id)) {
                    failures.push(format!("{id} (enumeration)"));
                }
            }
        }
    }
    (
        failures.is_empty() && checked > 0,
        if failures.is_empty() {
            format!("{checked} identities at N0=8 sum and mirror; {enumerated} match enumeration")
        } else {
            format!("mismatched: {}", failures.join(", "))
        },
    )
}

fn half_split_reproduction() -> Outcome {
    let id = match GeometricIdentity::half_split(14) {
        Ok(id) => id,
        Err(e) => return (false, e.to_string()),
    };
    let sets = build_redundant_sets(&id).nominal;
    let mut primary = vec![1u64];
    primary.extend((0..13).map(|k| 1u64 << k));
    let secondary: Vec<u64> = (0..13).map(|k| 1u64 << k).collect();
    let ok = sets == vec![primary, secondary];
    (ok, format!("{} sets, sizes {:?}", sets.len(), sets.iter().map(Vec::len).collect::<Vec<_>>()))
}

fn estimation_fidelity(seed: u64) -> Outcome {
    let id = GeometricIdentity::half_split(14).expect("valid identity");
    let nominal = build_redundant_sets(&id);
    let run = |mode: MeasurementMode, trial: u64| {
        let real = sample_realization(&nominal, 0.02, seed, trial)?;
        let truth: Vec<f64> = oracle::relative_mismatch(&real).into_iter().flatten().collect();
        let mut array = HalfSplitArray::new(real)?;
        array.measurement_mode = mode;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial);
        let est = estimate_mismatch(&array, &mut rng)?;
        Ok::<_, crate::Error>((truth, est))
    };

    let mut ideal_err: f64 = 0.0;
    for trial in 0..20 {
        match run(MeasurementMode::Ideal, trial) {
            Ok((truth, est)) => {
                for (a, b) in est.unquantized_flat().iter().zip(&truth) {
                    ideal_err = ideal_err.max((a - b).abs());
                }
            }
            Err(e) => return (false, format!("ideal mode: {e}")),
        }
    }

    let mut beh_err: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut sum_limit = 0.0;
    for trial in 0..100 {
        match run(MeasurementMode::Behavioral, trial) {
            Ok((truth, est)) => {
                let vals = est.values_flat();
                for (a, b) in vals.iter().zip(&truth) {
                    beh_err = beh_err.max((a - b).abs());
                }
                worst_sum = worst_sum.max(vals.iter().sum::<f64>().abs());
                sum_limit = est.format.quantum() * vals.len() as f64;
            }
            Err(e) => return (false, format!("behavioral mode: {e}")),
        }
    }
    let ok = ideal_err < IDEAL_ESTIMATION_TOLERANCE && beh_err <= 1.0 && worst_sum <= sum_limit;
    (
        ok,
        format!(
            "ideal max error {ideal_err:.2e} (< {IDEAL_ESTIMATION_TOLERANCE:e}); behavioral max error {beh_err:.3} LSB; max |sum| {worst_sum:.3} (<= {sum_limit})"
        ),
    )
}

fn heuristic_vs_oracle(seed: u64) -> Outcome {
    let base = AdcConfig::new(8, ConversionMode::Binary, 0.10, seed);
    let mut violations = 0usize;
    let mut worst_violation: f64 = 0.0;
    let mut via_opposite = 0usize;
    let mut beats_binary = 0;
    const TRIALS: u64 = 20;
    for t in 0..TRIALS {
        let build = |mode| AdcTrial::new(&base.with_mode(mode), t);
        let (b, h, o) = match (
            build(ConversionMode::Binary),
            build(ConversionMode::HeuristicCalibrated),
            build(ConversionMode::OracleOptimal),
        ) {
            (Ok(b), Ok(h), Ok(o)) => (b, h, o),
            (b, h, o) => {
                let e = [b.err(), h.err(), o.err()].into_iter().flatten().next().unwrap();
                return (false, e.to_string());
            }
        };
        let cal = h.estimate().map(Calibrator::new).transpose();
        let Ok(Some(cal)) = cal else {
            return (false, "calibrated trial has no estimate".to_string());
        };
        for code in 1..256u64 {
            let eh = (h.effective_threshold(code) - code as f64).abs();
            let eo = (o.effective_threshold(code) - code as f64).abs();
            if eh < eo - 1e-9 {
                violations += 1;
                worst_violation = worst_violation.max(eo - eh);
                if cal.assembly(code).route == CompensationRoute::OppositeBranch {
                    via_opposite += 1;
                }
            }
        }
        let mh = h.reference_set().total_mse();
        let mb = b.reference_set().total_mse();
        if mh <= mb {
            beats_binary += 1;
        }
    }
    let rate = beats_binary as f64 / TRIALS as f64;
    let ok = violations == 0 && rate >= 0.95;
    (
        ok,
        format!(
            "codes where heuristic beats oracle: {violations}, {via_opposite} of them opposite-branch (worst by {worst_violation:.3} LSB); M_heuristic <= M_binary in {:.0}% of trials",
            rate * 100.0
        ),
    )
}

struct PairedRun {
    binary_inl: Vec<f64>,
    heuristic_inl: Vec<f64>,
    binary_enob: Vec<f64>,
    heuristic_enob: Vec<f64>,
}

fn paired_run(seed: u64) -> crate::Result<PairedRun> {
    let base = AdcConfig::new(14, ConversionMode::Binary, 0.03, seed);
    let table = monte_carlo_sweep(
        &base,
        &[
            SweepCell { bits: 14, sigma0: 0.03, mode: ConversionMode::Binary },
            SweepCell { bits: 14, sigma0: 0.03, mode: ConversionMode::HeuristicCalibrated },
        ],
        50,
        true,
    )?;
    let col = |mode, f: fn(&crate::adc::SweepRow) -> f64| -> Vec<f64> {
        table.rows.iter().filter(|r| r.mode == mode).map(f).collect()
    };
    Ok(PairedRun {
        binary_inl: col(ConversionMode::Binary, |r| r.max_abs_inl.unwrap_or(f64::NAN)),
        heuristic_inl: col(ConversionMode::HeuristicCalibrated, |r| r.max_abs_inl.unwrap_or(f64::NAN)),
        binary_enob: col(ConversionMode::Binary, |r| r.entropy),
        heuristic_enob: col(ConversionMode::HeuristicCalibrated, |r| r.entropy),
    })
}

fn linearity_gain(seed: u64) -> Outcome {
    let run = match paired_run(seed) {
        Ok(r) => r,
        Err(e) => return (false, e.to_string()),
    };
    let ratios: Vec<f64> = run
        .binary_inl
        .iter()
        .zip(&run.heuristic_inl)
        .map(|(b, h)| b / h)
        .collect();
    let m = median(&ratios);
    (
        m >= 4.0,
        format!(
            "median per-trial max|INL| ratio {m:.2} (binary median {:.2} LSB, calibrated median {:.2} LSB)",
            median(&run.binary_inl),
            median(&run.heuristic_inl)
        ),
    )
}

fn resolution_gain(seed: u64) -> Outcome {
    let run = match paired_run(seed) {
        Ok(r) => r,
        Err(e) => return (false, e.to_string()),
    };
    let b = median(&run.binary_enob);
    let h = median(&run.heuristic_enob);
    (
        h - b >= 2.0,
        format!("median ENOB binary {b:.3}, calibrated {h:.3}, gain {:.3} bits", h - b),
    )
}

fn determinism(opts: &AcceptanceOptions) -> Outcome {
    let cells = [
        SweepCell { bits: 8, sigma0: 0.05, mode: ConversionMode::Binary },
        SweepCell { bits: 8, sigma0: 0.05, mode: ConversionMode::HeuristicCalibrated },
        SweepCell { bits: 8, sigma0: 0.05, mode: ConversionMode::OracleOptimal },
    ];
    let mut base = AdcConfig::new(0, ConversionMode::Binary, 0.0, opts.seed);
    base.comparator_noise_sigma = 0.05;
    base.v_co = 0.7;
    let first = monte_carlo_sweep(&base, &cells, 12, true);
    if opts.tamper_seed {
        base.seed = base.seed.wrapping_add(1);
    }
    let second = monte_carlo_sweep(&base, &cells, 12, true);
    match (first, second) {
        (Ok(a), Ok(b)) => {
            let (ca, cb) = (sweep_csv_bytes(&a), sweep_csv_bytes(&b));
            match (ca, cb) {
                (Ok(ca), Ok(cb)) => (
                    ca == cb,
                    format!(
                        "{} rows, {} CSV bytes, reruns {}",
                        a.rows.len(),
                        ca.len(),
                        if ca == cb { "identical" } else { "differ" }
                    ),
                ),
                (Err(e), _) | (_, Err(e)) => (false, e.to_string()),
            }
        }
        (Err(e), _) | (_, Err(e)) => (false, e.to_string()),
    }
}
