//! Reproducible experiment specs and the files they produce.
//!
//! A spec fully determines its outputs: every CSV starts with a `#` header
//! block carrying the schema version, seed and the spec itself, and every
//! JSON file wraps its payload in the same metadata. Nothing time- or
//! host-dependent is written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acceptance::{self, AcceptanceOptions, CriterionReport};
use crate::adc::{
    dnl_inl, monte_carlo_sweep, AdcConfig, AdcTrial, ConversionMode, Linearity, SweepCell,
    SweepTable, TransferFunction,
};
use crate::component::{
    assembly_count_profile, build_binary_set, sample_realization, theoretical_error_variance,
    GeometricIdentity,
};
use crate::error::{Error, Result};

pub use crate::adc::SWEEP_SCHEMA_VERSION as SCHEMA_VERSION;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "REDSENSE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "redsense-out";

pub const COMMANDS: [&str; 6] = [
    "entropy-sweep",
    "error-dist",
    "assembly-hist",
    "adc-measure",
    "calibrate-demo",
    "verify",
];

/// Largest resolution `error-dist` tabulates.
pub const ERROR_DIST_MAX_BITS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    /// Entropy and MQR distributions over an `(N, σ0, mode)` lattice.
    EntropySweep {
        bits: Vec<u32>,
        sigma0: Vec<f64>,
        #[serde(default = "default_modes")]
        modes: Vec<ConversionMode>,
        trials: u64,
    },
    /// Per-code mean and variance of `θ_i - i` for binary arrays.
    ErrorDist {
        bits: u32,
        sigma0: f64,
        trials: u64,
    },
    /// Number of assemblies reaching every nominal reference.
    AssemblyHist { identity: GeometricIdentity },
    /// Static linearity and ENOB distributions of the simulated converter.
    AdcMeasure {
        bits: Vec<u32>,
        sigma0: Vec<f64>,
        #[serde(default = "all_modes")]
        modes: Vec<ConversionMode>,
        trials: u64,
        #[serde(default)]
        circuit: Circuit,
    },
    /// One array before and after calibration.
    CalibrateDemo {
        bits: u32,
        sigma0: f64,
        #[serde(default)]
        trial: u64,
        #[serde(default)]
        circuit: Circuit,
    },
    /// The acceptance checks.
    Verify {
        #[serde(default)]
        criteria: Vec<u32>,
        #[serde(default)]
        tamper_seed: bool,
    },
}

fn default_modes() -> Vec<ConversionMode> {
    vec![ConversionMode::Binary]
}

fn all_modes() -> Vec<ConversionMode> {
    ConversionMode::ALL.to_vec()
}

/// Non-ideal circuit parameters, LSB where applicable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Circuit {
    pub v_co: f64,
    pub comparator_noise_sigma: f64,
    pub sigma0_bridge: f64,
}

impl Circuit {
    fn apply(&self, cfg: AdcConfig) -> AdcConfig {
        AdcConfig {
            v_co: self.v_co,
            comparator_noise_sigma: self.comparator_noise_sigma,
            sigma0_bridge: self.sigma0_bridge,
            ..cfg
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    fn csv(self) -> bool {
        self != OutputFormat::Json
    }

    fn json(self) -> bool {
        self != OutputFormat::Csv
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            other => Err(Error::validation(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(flatten)]
    pub command: Command,
    pub seed: u64,
    /// Output directory; falls back to `$REDSENSE_OUT_DIR`, then
    /// `redsense-out`. Not part of the embedded header.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl ExperimentSpec {
    pub fn new(command: Command, seed: u64) -> Self {
        Self {
            command,
            seed,
            output: None,
            format: OutputFormat::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.command {
            Command::EntropySweep { .. } => "entropy-sweep",
            Command::ErrorDist { .. } => "error-dist",
            Command::AssemblyHist { .. } => "assembly-hist",
            Command::AdcMeasure { .. } => "adc-measure",
            Command::CalibrateDemo { .. } => "calibrate-demo",
            Command::Verify { .. } => "verify",
        }
    }

    /// Parses a JSON spec, reporting an unrecognized `command` separately
    /// from other schema errors.
    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        match value.get("command").and_then(|c| c.as_str()) {
            Some(c) if COMMANDS.contains(&c) => {}
            Some(c) => return Err(Error::UnknownCommand(c.to_string())),
            None => return Err(Error::validation("spec has no 'command' field")),
        }
        let spec: Self = serde_json::from_value(value)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |trials: u64| {
            if trials == 0 {
                Err(Error::validation("trials must be positive"))
            } else {
                Ok(())
            }
        };
        let sigmas = |s: &[f64]| {
            if s.is_empty() || s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                Err(Error::validation("sigma0 list must be non-empty and >= 0"))
            } else {
                Ok(())
            }
        };
        let nonempty = |what: &str, n: usize| {
            if n == 0 {
                Err(Error::validation(format!("{what} list must not be empty")))
            } else {
                Ok(())
            }
        };
        match &self.command {
            Command::EntropySweep { bits, sigma0, modes, trials } => {
                positive(*trials)?;
                sigmas(sigma0)?;
                nonempty("bits", bits.len())?;
                nonempty("mode", modes.len())?;
            }
            Command::AdcMeasure { bits, sigma0, modes, trials, circuit } => {
                positive(*trials)?;
                sigmas(sigma0)?;
                nonempty("bits", bits.len())?;
                nonempty("mode", modes.len())?;
                circuit.apply(AdcConfig::new(2, ConversionMode::Binary, 0.0, 0)).validate()?;
            }
            Command::ErrorDist { bits, sigma0, trials } => {
                positive(*trials)?;
                sigmas(&[*sigma0])?;
                if *bits == 0 || *bits > ERROR_DIST_MAX_BITS {
                    return Err(Error::Capacity {
                        what: "error-dist resolution",
                        requested: *bits as usize,
                        limit: ERROR_DIST_MAX_BITS as usize,
                    });
                }
            }
            Command::CalibrateDemo { bits, sigma0, circuit, .. } => {
                circuit
                    .apply(AdcConfig::new(*bits, ConversionMode::HeuristicCalibrated, *sigma0, 0))
                    .validate()?;
            }
            Command::AssemblyHist { .. } => {}
            Command::Verify { criteria, .. } => {
                if let Some(c) = criteria.iter().find(|c| !acceptance::CRITERIA.contains(c)) {
                    return Err(Error::validation(format!("no acceptance criterion {c}")));
                }
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// The spec as embedded in output headers: without the output path, so
    /// moving a run does not change its bytes.
    fn header_json(&self) -> Result<String> {
        let mut s = self.clone();
        s.output = None;
        Ok(serde_json::to_string(&s)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
    /// False only when acceptance checks failed.
    pub passed: bool,
    pub reports: Vec<CriterionReport>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    seed: u64,
    spec: &'a ExperimentSpec,
    result: T,
}

/// Runs `spec` and writes its files.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate()?;
    let out = Emitter::new(spec)?;
    match &spec.command {
        Command::EntropySweep { bits, sigma0, modes, trials } => {
            let base = AdcConfig::new(0, ConversionMode::Binary, 0.0, spec.seed);
            let cells = lattice(bits, sigma0, modes);
            let table = monte_carlo_sweep(&base, &cells, *trials, false)?;
            sweep_outputs(spec, &out, &cells, &table)
        }
        Command::AdcMeasure { bits, sigma0, modes, trials, circuit } => {
            let base = circuit.apply(AdcConfig::new(0, ConversionMode::Binary, 0.0, spec.seed));
            let cells = lattice(bits, sigma0, modes);
            let table = monte_carlo_sweep(&base, &cells, *trials, true)?;
            sweep_outputs(spec, &out, &cells, &table)
        }
        Command::ErrorDist { bits, sigma0, trials } => {
            let stats = binary_error_statistics(*bits, *sigma0, *trials, spec.seed)?;
            let mut files = Vec::new();
            if spec.format.csv() {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["code", "mean_error", "variance", "theory_variance"])?;
                for i in 0..stats.mean.len() {
                    w.write_record([
                        i.to_string(),
                        stats.mean[i].to_string(),
                        stats.variance[i].to_string(),
                        theoretical_error_variance(i as u64, *bits, *sigma0).to_string(),
                    ])?;
                }
                files.push(out.csv(csv_body(w)?)?);
            }
            let peak = stats
                .variance
                .iter()
                .enumerate()
                .fold((0usize, 0.0f64), |m, (i, &v)| if v > m.1 { (i, v) } else { m });
            if spec.format.json() {
                files.push(out.json(&serde_json::json!({
                    "bits": bits,
                    "sigma0": sigma0,
                    "trials": trials,
                    "peak_variance_code": peak.0,
                    "peak_variance": peak.1,
                    "theory_peak_variance": theoretical_error_variance(peak.0 as u64, *bits, *sigma0),
                }))?);
            }
            Ok(RunOutcome::ok(
                files,
                format!("error-dist: N={bits} sigma0={sigma0} peak variance {:.4} LSB^2 at code {}", peak.1, peak.0),
            ))
        }
        Command::AssemblyHist { identity } => {
            let counts = assembly_count_profile(identity)?;
            let total: u64 = counts.iter().sum();
            let min = counts.iter().copied().min().unwrap_or(0);
            let max = counts.iter().copied().max().unwrap_or(0);
            let mut files = Vec::new();
            if spec.format.csv() {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["reference", "assemblies"])?;
                for (i, c) in counts.iter().enumerate() {
                    w.write_record([i.to_string(), c.to_string()])?;
                }
                files.push(out.csv(csv_body(w)?)?);
            }
            if spec.format.json() {
                files.push(out.json(&serde_json::json!({
                    "identity": identity,
                    "components": identity.component_count(),
                    "full_scale": identity.full_scale(),
                    "total_assemblies": total,
                    "min_count": min,
                    "max_count": max,
                }))?);
            }
            Ok(RunOutcome::ok(
                files,
                format!("assembly-hist: {identity} total {total} assemblies, per-reference {min}..{max}"),
            ))
        }
        Command::CalibrateDemo { bits, sigma0, trial, circuit } => {
            let demo = calibrate_demo(&circuit.apply(AdcConfig::new(*bits, ConversionMode::Binary, *sigma0, spec.seed)), *trial)?;
            let mut files = Vec::new();
            if spec.format.csv() {
                files.push(out.csv(demo.edges_csv()?)?);
            }
            if spec.format.json() {
                files.push(out.json(&demo.reports)?);
            }
            let summary = demo
                .reports
                .iter()
                .map(|r| {
                    format!(
                        "{}: ENOB {:.3} max|DNL| {:.3} max|INL| {:.3} missing {}",
                        r.mode, r.enob, r.max_abs_dnl, r.max_abs_inl, r.missing_codes
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            Ok(RunOutcome::ok(files, format!("calibrate-demo N={bits} sigma0={sigma0}: {summary}")))
        }
        Command::Verify { criteria, tamper_seed } => {
            let opts = AcceptanceOptions { seed: spec.seed, tamper_seed: *tamper_seed };
            let ids: Vec<u32> = if criteria.is_empty() {
                acceptance::CRITERIA.to_vec()
            } else {
                criteria.clone()
            };
            let reports: Vec<CriterionReport> =
                ids.iter().filter_map(|&id| acceptance::run(id, &opts)).collect();
            let passed = reports.iter().all(|r| r.passed);
            let mut files = Vec::new();
            if spec.format.json() {
                files.push(out.json(&reports)?);
            }
            let n_pass = reports.iter().filter(|r| r.passed).count();
            Ok(RunOutcome {
                files,
                summary: format!("verify: {n_pass}/{} criteria passed", reports.len()),
                passed,
                reports,
            })
        }
    }
}

impl RunOutcome {
    fn ok(files: Vec<PathBuf>, summary: String) -> Self {
        Self {
            files,
            summary,
            passed: true,
            reports: Vec::new(),
        }
    }
}

fn lattice(bits: &[u32], sigma0: &[f64], modes: &[ConversionMode]) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &mode in modes {
        for &s in sigma0 {
            for &b in bits {
                cells.push(SweepCell { bits: b, sigma0: s, mode });
            }
        }
    }
    cells
}

fn sweep_outputs(
    spec: &ExperimentSpec,
    out: &Emitter,
    cells: &[SweepCell],
    table: &SweepTable,
) -> Result<RunOutcome> {
    let mut files = Vec::new();
    if spec.format.csv() {
        files.push(out.csv(sweep_csv_bytes(table)?)?);
    }
    let summaries = table.summaries(cells);
    if spec.format.json() {
        files.push(out.json(&serde_json::json!({
            "cells": summaries,
            "errors": table.errors,
        }))?);
    }
    let mut summary = format!(
        "{}: {} cells, {} rows",
        spec.name(),
        summaries.len(),
        table.rows.len()
    );
    if !table.errors.is_empty() {
        summary.push_str(&format!(", {} cells skipped", table.errors.len()));
    }
    Ok(RunOutcome::ok(files, summary))
}

const SWEEP_COLUMNS: [&str; 17] = [
    "bits",
    "sigma0",
    "mode",
    "trial",
    "entropy",
    "mse",
    "mqr",
    "wide_codes",
    "missing_codes",
    "non_monotone",
    "max_abs_dnl",
    "max_abs_inl",
    "route_none",
    "route_add",
    "route_remove",
    "route_opposite_branch",
    "route_saturated",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One CSV row per trial, without the header block.
pub fn sweep_csv_bytes(table: &SweepTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS)?;
    for r in &table.rows {
        w.write_record([
            r.bits.to_string(),
            r.sigma0.to_string(),
            r.mode.to_string(),
            r.trial.to_string(),
            r.entropy.to_string(),
            r.mse.to_string(),
            r.mqr.to_string(),
            r.wide_codes.to_string(),
            opt(r.missing_codes),
            opt(r.non_monotone),
            opt(r.max_abs_dnl),
            opt(r.max_abs_inl),
            r.routes.none.to_string(),
            r.routes.add.to_string(),
            r.routes.remove.to_string(),
            r.routes.opposite_branch.to_string(),
            r.routes.saturated.to_string(),
        ])?;
    }
    csv_body(w)
}

fn csv_body(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Per-code statistics of `θ_i - i` over binary arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStatistics {
    pub bits: u32,
    pub sigma0: f64,
    pub trials: u64,
    pub mean: Vec<f64>,
    /// Unbiased sample variance.
    pub variance: Vec<f64>,
}

/// Samples `trials` binary arrays and accumulates the reference error of
/// every code. Code `2^N - 1` uses the full array and is exact.
pub fn binary_error_statistics(bits: u32, sigma0: f64, trials: u64, seed: u64) -> Result<ErrorStatistics> {
    if bits == 0 || bits > ERROR_DIST_MAX_BITS {
        return Err(Error::Capacity {
            what: "error-dist resolution",
            requested: bits as usize,
            limit: ERROR_DIST_MAX_BITS as usize,
        });
    }
    if trials < 2 {
        return Err(Error::validation("variance needs at least 2 trials"));
    }
    let nominal = build_binary_set(bits)?;
    let codes = 1usize << bits;
    let half = bits / 2;
    let zero = || (vec![0.0f64; codes], vec![0.0f64; codes]);
    let (s1, s2) = (0..trials)
        .into_par_iter()
        .map(|t| sample_realization(&nominal, sigma0, seed, t))
        .try_fold(zero, |(mut s1, mut s2), real| {
            let model = real?.reference_model();
            let w = model.weights();
            // θ splits into independent low and high bit-field tables.
            let table = |lo: u32, hi: u32| -> Vec<f64> {
                let mut t = vec![0.0; 1 << (hi - lo)];
                for c in 1..t.len() {
                    let b = c.trailing_zeros();
                    t[c] = t[c & (c - 1)] + w[(lo + b) as usize];
                }
                t
            };
            let low = table(0, half);
            let high = table(half, bits);
            let scale = model.full_scale() / model.total();
            for (h, &hw) in high.iter().enumerate() {
                for (l, &lw) in low.iter().enumerate() {
                    let i = h << half | l;
                    if i == 0 || i == codes - 1 {
                        continue;
                    }
                    let e = (hw + lw) * scale - i as f64;
                    s1[i] += e;
                    s2[i] += e * e;
                }
            }
            Ok::<_, Error>((s1, s2))
        })
        .try_reduce(zero, |(mut a1, mut a2), (b1, b2)| {
            a1.iter_mut().zip(&b1).for_each(|(a, b)| *a += b);
            a2.iter_mut().zip(&b2).for_each(|(a, b)| *a += b);
            Ok((a1, a2))
        })?;
    let n = trials as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let variance = s2
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / n - m * m) * n / (n - 1.0)).max(0.0))
        .collect();
    Ok(ErrorStatistics { bits, sigma0, trials, mean, variance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: ConversionMode,
    pub enob: f64,
    pub mqr: f64,
    pub max_abs_dnl: f64,
    pub max_abs_inl: f64,
    pub missing_codes: usize,
    pub non_monotone: usize,
}

#[derive(Debug, Clone)]
pub struct CalibrationDemo {
    pub reports: Vec<ModeReport>,
    pub transfer: Vec<(TransferFunction, Linearity)>,
}

impl CalibrationDemo {
    /// Edges, DNL and INL of every mode side by side, one row per code.
    pub fn edges_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["code".to_string()];
        for r in &self.reports {
            for col in ["edge", "dnl", "inl"] {
                header.push(format!("{col}_{}", r.mode));
            }
        }
        w.write_record(&header)?;
        let codes = self.transfer.first().map_or(0, |(tf, _)| tf.edges.len());
        for k in 0..codes {
            let mut row = vec![(k + 1).to_string()];
            for (tf, lin) in &self.transfer {
                row.push(tf.edges[k].to_string());
                row.push(opt(lin.dnl.get(k)));
                row.push(lin.inl[k].to_string());
            }
            w.write_record(&row)?;
        }
        csv_body(w)
    }
}

/// The same array converted binary, calibrated and, when it fits the
/// search, oracle-optimal.
pub fn calibrate_demo(cfg: &AdcConfig, trial: u64) -> Result<CalibrationDemo> {
    let mut reports = Vec::new();
    let mut transfer = Vec::new();
    for mode in ConversionMode::ALL {
        let c = cfg.with_mode(mode);
        if mode == ConversionMode::OracleOptimal && c.validate().is_err() {
            continue;
        }
        let mut adc = AdcTrial::new(&c, trial)?;
        let metrics = adc.reference_set().metrics();
        let tf = adc.transfer_function();
        let lin = dnl_inl(&tf);
        reports.push(ModeReport {
            mode,
            enob: metrics.entropy,
            mqr: metrics.mqr,
            max_abs_dnl: lin.max_abs_dnl(),
            max_abs_inl: lin.max_abs_inl(),
            missing_codes: tf.missing_codes.len(),
            non_monotone: tf.non_monotone.len(),
        });
        transfer.push((tf, lin));
    }
    Ok(CalibrationDemo { reports, transfer })
}

/// Writes `<dir>/<command>.{csv,json}` atomically.
struct Emitter {
    dir: PathBuf,
    stem: &'static str,
    seed: u64,
    header: String,
    spec: ExperimentSpec,
}

impl Emitter {
    fn new(spec: &ExperimentSpec) -> Result<Self> {
        let dir = spec.output_dir();
        fs::create_dir_all(&dir)?;
        let mut clean = spec.clone();
        clean.output = None;
        Ok(Self {
            dir,
            stem: spec.name(),
            seed: spec.seed,
            header: spec.header_json()?,
            spec: clean,
        })
    }

    fn csv(&self, body: Vec<u8>) -> Result<PathBuf> {
        let mut bytes = format!(
            "# schema_version: {SCHEMA_VERSION}\n# seed: {}\n# spec: {}\n",
            self.seed, self.header
        )
        .into_bytes();
        bytes.extend(body);
        let path = self.dir.join(format!("{}.csv", self.stem));
        write_atomic(&path, &bytes)?;
        Ok(path)
    }

    fn json<T: Serialize>(&self, result: &T) -> Result<PathBuf> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            spec: &self.spec,
            result,
        };
        let mut bytes = serde_json::to_vec_pretty(&env)?;
        bytes.push(b'\n');
        let path = self.dir.join(format!("{}.json", self.stem));
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads the data rows of a sweep CSV, skipping the header block.
pub fn read_csv_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(r.records().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ExperimentSpec::new(
            Command::EntropySweep {
                bits: vec![4, 6],
                sigma0: vec![0.01, 0.1],
                modes: vec![ConversionMode::Binary],
                trials: 3,
            },
            7,
        );
        let back = ExperimentSpec::from_json(&spec.to_json().unwrap()).unwrap();
        assert_eq!(back, spec);
        let id = ExperimentSpec::from_json(r#"{"command":"assembly-hist","identity":"8x7s1","seed":1}"#).unwrap();
        assert_eq!(id.command, Command::AssemblyHist { identity: "8x7s1".parse().unwrap() });
    }

    #[test]
    fn spec_errors_are_distinguished() {
        let e = ExperimentSpec::from_json(r#"{"command":"plot","seed":1}"#).unwrap_err();
        assert!(matches!(e, Error::UnknownCommand(_)));
        let e = ExperimentSpec::from_json(r#"{"command":"assembly-hist","identity":"8x9s1","seed":1}"#)
            .unwrap_err();
        assert_eq!(e.exit_code(), crate::error::EXIT_VALIDATION);
        let e = ExperimentSpec::from_json(r#"{"command":"error-dist","bits":30,"sigma0":0.1,"trials":3,"seed":1}"#)
            .unwrap_err();
        assert_eq!(e.exit_code(), crate::error::EXIT_CAPACITY);
    }

    #[test]
    fn error_statistics_match_direct_references() {
        let stats = binary_error_statistics(6, 0.1, 40, 3).unwrap();
        let nominal = build_binary_set(6).unwrap();
        let mut direct = vec![0.0; 64];
        for t in 0..40 {
            let real = sample_realization(&nominal, 0.1, 3, t).unwrap();
            let model = real.reference_model();
            for (i, d) in direct.iter_mut().enumerate() {
                *d += model.reference(nominal.identity.binary_assembly(i as u64)) - i as f64;
            }
        }
        for i in 0..64 {
            assert!((stats.mean[i] - direct[i] / 40.0).abs() < 1e-9, "code {i}");
        }
        assert_eq!(stats.variance[0], 0.0);
        assert_eq!(stats.variance[63], 0.0);
    }
}
