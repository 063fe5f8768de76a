use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use redsense::adc::ConversionMode;
use redsense::component::GeometricIdentity;
use redsense::error::{EXIT_ACCEPTANCE, EXIT_OK, EXIT_UNKNOWN_COMMAND, EXIT_VALIDATION};
use redsense::experiment::{self, Circuit, Command, ExperimentSpec, OutputFormat, OUT_DIR_ENV};
use redsense::Result;

/// Mismatch-limited quantizers with redundant component sets: sweeps,
/// assembly statistics, calibration demos and the acceptance checks.
#[derive(Parser)]
#[command(name = "redsense", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "both")]
    format: OutputFormat,
    /// Print the experiment spec as JSON instead of running it.
    #[arg(long)]
    print_spec: bool,
}

#[derive(Args)]
struct CircuitArgs {
    /// Comparator offset, LSB.
    #[arg(long, default_value_t = 0.0)]
    v_co: f64,
    /// Comparator noise per decision, LSB rms.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Bridge capacitor mismatch, relative.
    #[arg(long, default_value_t = 0.0)]
    bridge: f64,
}

impl From<CircuitArgs> for Circuit {
    fn from(a: CircuitArgs) -> Self {
        Circuit {
            v_co: a.v_co,
            comparator_noise_sigma: a.noise,
            sigma0_bridge: a.bridge,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Entropy and MQR over resolutions and mismatch ratios.
    EntropySweep {
        /// Resolutions: `4..16`, `8,12,16` or a single value.
        #[arg(long = "n", value_parser = parse_bits)]
        bits: BitList,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma0: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "binary")]
        modes: Vec<ConversionMode>,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Per-code reference error statistics of binary arrays.
    ErrorDist {
        #[arg(long = "n")]
        bits: u32,
        #[arg(long)]
        sigma0: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Number of assemblies per nominal reference.
    AssemblyHist {
        /// `N0xN1sS1[xN2sS2...]`, e.g. `8x7s1`.
        #[arg(long)]
        identity: GeometricIdentity,
        #[command(flatten)]
        common: Common,
    },
    /// DNL, INL and ENOB distributions of the simulated converter.
    AdcMeasure {
        #[arg(long = "n", value_parser = parse_bits)]
        bits: BitList,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma0: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "binary,heuristic,oracle")]
        modes: Vec<ConversionMode>,
        #[arg(long, default_value_t = 50)]
        trials: u64,
        #[command(flatten)]
        circuit: CircuitArgs,
        #[command(flatten)]
        common: Common,
    },
    /// One array before and after calibration.
    CalibrateDemo {
        #[arg(long = "n")]
        bits: u32,
        #[arg(long)]
        sigma0: f64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[command(flatten)]
        circuit: CircuitArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Run the acceptance checks.
    Verify {
        /// Subset of criteria, e.g. `1,5,11`.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
        /// Negative control: rerun the determinism check with another seed.
        #[arg(long)]
        tamper_seed: bool,
        #[arg(long, default_value_t = redsense::acceptance::AcceptanceOptions::default().seed)]
        seed: u64,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: OutputFormat,
    },
    /// Run a stored JSON experiment spec.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's output directory.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone)]
struct BitList(Vec<u32>);

fn parse_bits(s: &str) -> std::result::Result<BitList, String> {
    let num = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("'{t}': {e}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty range {s}"));
        }
        return Ok(BitList((a..=b).collect()));
    }
    s.split(',').map(num).collect::<std::result::Result<_, _>>().map(BitList)
}

fn spec_of(cmd: Cmd) -> Result<(ExperimentSpec, bool)> {
    let build = |command, common: Common| {
        let spec = ExperimentSpec {
            command,
            seed: common.seed,
            output: common.out,
            format: common.format,
        };
        (spec, common.print_spec)
    };
    Ok(match cmd {
        Cmd::EntropySweep { bits, sigma0, modes, trials, common } => build(
            Command::EntropySweep { bits: bits.0, sigma0, modes, trials },
            common,
        ),
        Cmd::ErrorDist { bits, sigma0, trials, common } => {
            build(Command::ErrorDist { bits, sigma0, trials }, common)
        }
        Cmd::AssemblyHist { identity, common } => build(Command::AssemblyHist { identity }, common),
        Cmd::AdcMeasure { bits, sigma0, modes, trials, circuit, common } => build(
            Command::AdcMeasure { bits: bits.0, sigma0, modes, trials, circuit: circuit.into() },
            common,
        ),
        Cmd::CalibrateDemo { bits, sigma0, trial, circuit, common } => build(
            Command::CalibrateDemo { bits, sigma0, trial, circuit: circuit.into() },
            common,
        ),
        Cmd::Verify { criteria, tamper_seed, seed, out, format } => (
            ExperimentSpec {
                command: Command::Verify { criteria, tamper_seed },
                seed,
                output: out,
                format,
            },
            false,
        ),
        Cmd::Run { spec, out } => {
            let mut s = ExperimentSpec::from_json(&std::fs::read_to_string(&spec)?)?;
            if out.is_some() {
                s.output = out;
            }
            (s, false)
        }
    })
}

fn execute(cmd: Cmd) -> Result<i32> {
    let (spec, print_only) = spec_of(cmd)?;
    spec.validate()?;
    if print_only {
        println!("{}", spec.to_json()?);
        return Ok(EXIT_OK);
    }
    let outcome = experiment::run(&spec)?;
    for r in &outcome.reports {
        println!("{r}");
    }
    println!("{}", outcome.summary);
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(if outcome.passed { EXIT_OK } else { EXIT_ACCEPTANCE })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_UNKNOWN_COMMAND,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("redsense: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
