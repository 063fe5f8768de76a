//! Monte Carlo sweeps over resolution, mismatch and mode.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dnl_inl, AdcConfig, AdcTrial, ConversionMode, RouteCounts};
use crate::error::{Error, Result};

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

/// Median and quartiles, linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub count: usize,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            count: v.len(),
        })
    }
}

pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnobSummary {
    pub config: AdcConfig,
    pub values: Vec<f64>,
    pub quartiles: Quartiles,
}

/// Entropy of the realized thresholds over `trials` independent arrays.
pub fn enob_estimate(cfg: &AdcConfig, trials: u64) -> Result<EnobSummary> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::validation("trial count must be positive"));
    }
    let values = (0..trials)
        .into_par_iter()
        .map(|t| AdcTrial::new(cfg, t).map(|a| a.reference_set().metrics().entropy))
        .collect::<Result<Vec<_>>>()?;
    let quartiles = Quartiles::of(&values).expect("non-empty");
    Ok(EnobSummary {
        config: *cfg,
        values,
        quartiles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub bits: u32,
    pub sigma0: f64,
    pub mode: ConversionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bits: u32,
    pub sigma0: f64,
    pub mode: ConversionMode,
    pub trial: u64,
    pub entropy: f64,
    pub mse: f64,
    pub mqr: f64,
    pub wide_codes: usize,
    pub missing_codes: Option<usize>,
    pub non_monotone: Option<usize>,
    pub max_abs_dnl: Option<f64>,
    pub max_abs_inl: Option<f64>,
    pub routes: RouteCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub cell: SweepCell,
    pub message: String,
    pub capacity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: SweepCell,
    pub trials: usize,
    pub entropy: Quartiles,
    pub mqr: Quartiles,
    pub max_abs_inl: Option<Quartiles>,
    pub max_abs_dnl: Option<Quartiles>,
    pub missing_code_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Cells that could not run; the rest of the sweep is unaffected.
    pub errors: Vec<CellError>,
}

impl SweepTable {
    pub fn rows_for(&self, cell: &SweepCell) -> impl Iterator<Item = &SweepRow> + '_ {
        let cell = *cell;
        self.rows
            .iter()
            .filter(move |r| r.bits == cell.bits && r.sigma0 == cell.sigma0 && r.mode == cell.mode)
    }

    pub fn summaries(&self, cells: &[SweepCell]) -> Vec<CellSummary> {
        cells
            .iter()
            .filter_map(|cell| {
                let rows: Vec<&SweepRow> = self.rows_for(cell).collect();
                let col = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Option<Quartiles> {
                    let v: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
                    v.and_then(|v| Quartiles::of(&v))
                };
                Some(CellSummary {
                    cell: *cell,
                    trials: rows.len(),
                    entropy: col(&|r| Some(r.entropy))?,
                    mqr: col(&|r| Some(r.mqr))?,
                    max_abs_inl: col(&|r| r.max_abs_inl),
                    max_abs_dnl: col(&|r| r.max_abs_dnl),
                    missing_code_rate: rows
                        .iter()
                        .map(|r| r.missing_codes.map(|m| (m > 0) as u32 as f64))
                        .sum::<Option<f64>>()
                        .map(|s| s / rows.len() as f64),
                })
            })
            .collect()
    }
}

/// Runs every cell for trials `0..trials`. `base` supplies seed, offset,
/// noise and bridge mismatch; each cell overrides resolution, σ0 and mode.
/// Rows come back ordered by cell, then trial, regardless of scheduling.
pub fn monte_carlo_sweep(
    base: &AdcConfig,
    cells: &[SweepCell],
    trials: u64,
    linearity: bool,
) -> Result<SweepTable> {
    if trials == 0 {
        return Err(Error::validation("trial count must be positive"));
    }
    let mut errors = Vec::new();
    let mut runnable = Vec::new();
    for cell in cells {
        let cfg = AdcConfig {
            bits: cell.bits,
            sigma0: cell.sigma0,
            mode: cell.mode,
            ..*base
        };
        match cfg.validate() {
            Ok(()) => runnable.push(cfg),
            Err(e) => errors.push(CellError {
                cell: *cell,
                capacity: matches!(e, Error::Capacity { .. }),
                message: e.to_string(),
            }),
        }
    }
    let jobs: Vec<(AdcConfig, u64)> = runnable
        .iter()
        .flat_map(|c| (0..trials).map(move |t| (*c, t)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|(cfg, t)| run_trial(cfg, *t, linearity))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows, errors })
}

fn run_trial(cfg: &AdcConfig, trial: u64, linearity: bool) -> Result<SweepRow> {
    let mut adc = AdcTrial::new(cfg, trial)?;
    let refs = adc.reference_set();
    let metrics = refs.metrics();
    let profile = refs.error_profile();
    let (missing, non_mono, dnl, inl) = if linearity {
        let tf = adc.transfer_function();
        let lin = dnl_inl(&tf);
        (
            Some(tf.missing_codes.len()),
            Some(tf.non_monotone.len()),
            Some(lin.max_abs_dnl()),
            Some(lin.max_abs_inl()),
        )
    } else {
        (None, None, None, None)
    };
    Ok(SweepRow {
        bits: cfg.bits,
        sigma0: cfg.sigma0,
        mode: cfg.mode,
        trial,
        entropy: metrics.entropy,
        mse: metrics.mse,
        mqr: metrics.mqr,
        wide_codes: profile.wide_code_count,
        missing_codes: missing,
        non_monotone: non_mono,
        max_abs_dnl: dnl,
        max_abs_inl: inl,
        routes: adc.routes(),
    })
}
