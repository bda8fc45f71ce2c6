//! `rydswitch`: derived parameters, model curves, Monte Carlo runs, fits and
//! the acceptance suite for the Rydberg single-photon switch.
//!
//! Every table goes to stdout or `--out` as comma-separated text headed by
//! a `#` provenance block. With `--out` (or `--manifest`) a JSON run
//! manifest is written next to it.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage, 3 configuration or
//! input error, 4 validity warning under `--strict`, 5 fit did not
//! converge, 6 acceptance criterion failed.

mod commands;
mod curves;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rydswitch::presets::{Preset, BASELINE_NAME, PRESET_DIR_ENV};

use crate::output::{RunManifest, Sink};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_VALIDITY: u8 = 4;
pub const EXIT_NOT_CONVERGED: u8 = 5;
pub const EXIT_ACCEPTANCE: u8 = 6;

#[derive(Debug, Parser)]
#[command(name = "rydswitch", version, about = "Models, simulation and fits for a Rydberg-blockade single-photon switch")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Named preset, or a path to a preset file.
    #[arg(long, global = true, default_value = BASELINE_NAME)]
    preset: String,

    /// Configuration file (TOML with unit-suffixed values); replaces --preset.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Directory searched for `<name>.toml` presets.
    #[arg(long, global = true, env = PRESET_DIR_ENV)]
    preset_dir: Option<PathBuf>,

    /// Write the table here instead of stdout.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Manifest path (default: `<out>.manifest.json` when --out is given).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Exit with code 4 when a model leaves its regime of validity.
    #[arg(long, global = true)]
    strict: bool,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derived experimental parameters with their reference values.
    Derive,
    /// EIT transmission spectrum; preset values unless overridden.
    Spectrum(SpectrumArgs),
    /// Model curve over a sweep of its independent variable.
    Curve(CurveArgs),
    /// Photon-resolved Monte Carlo of gate/target cycles.
    Montecarlo(MonteCarloArgs),
    /// Least-squares fit of a registered model to a data file.
    Fit(FitArgs),
    /// Synthetic data from a registered model with seeded Gaussian noise.
    Synth(SynthArgs),
    /// Runs the acceptance criteria and prints a pass/fail table.
    Acceptance(AcceptanceArgs),
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// First detuning, in units of 2 pi MHz.
    #[arg(long, default_value_t = -20.0, allow_negative_numbers = true)]
    pub from_mhz: f64,
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    pub to_mhz: f64,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long)]
    pub od: Option<f64>,
    #[arg(long)]
    pub t0: Option<f64>,
    /// Transparency FWHM, 2 pi MHz.
    #[arg(long)]
    pub width_mhz: Option<f64>,
    /// Excited-state linewidth, 2 pi MHz.
    #[arg(long)]
    pub gamma_mhz: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta0_mhz: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta1_mhz: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Curve name; run with an unknown name to list them.
    pub name: String,
    /// Sweep as from:to:points, in SI units of the x column.
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: Option<String>,
    /// Parameter override for fit-model curves, name=value (repeatable).
    #[arg(long = "param", value_parser = parse_assignment)]
    pub params: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Transit {
    Rapid,
    ZResolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum G2Source {
    /// Coherent light.
    Poissonian,
    /// Retrieved gate excitations, one per occupied bin.
    Retrieval,
    /// Target photons with the blockade survival correlation.
    Transit,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long, default_value_t = 100_000)]
    pub cycles: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Mean gate photon number (default from the preset).
    #[arg(long)]
    pub n_g: Option<f64>,
    /// Mean target photon number (default from the preset).
    #[arg(long)]
    pub n_t: Option<f64>,
    /// Gate propagation model (default follows the preset storage mode).
    #[arg(long, value_enum)]
    pub transit: Option<Transit>,
    /// Per-cycle records as a delimited file.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Also estimate g2(tau) from synthetic two-detector clicks.
    #[arg(long, value_enum, requires = "g2_out")]
    pub g2: Option<G2Source>,
    #[arg(long)]
    pub g2_out: Option<PathBuf>,
    /// g2 bin width in us.
    #[arg(long, default_value_t = 0.05)]
    pub g2_bin_us: f64,
    /// Largest |tau| in us.
    #[arg(long, default_value_t = 1.0)]
    pub g2_max_tau_us: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub model: String,
    /// Delimited data file: x, y and optional sigma columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Free parameter, name or name=start (repeatable). When given, every
    /// parameter not listed is fixed at its preset value.
    #[arg(long)]
    pub free: Vec<String>,
    /// Fixed parameter, name=value (repeatable).
    #[arg(long, value_parser = parse_assignment)]
    pub fix: Vec<(String, f64)>,
    /// Bounds, name=lo:hi (repeatable).
    #[arg(long, allow_hyphen_values = true)]
    pub bound: Vec<String>,
    #[arg(long, default_value_t = rydswitch::fitting::MAX_ITERATIONS)]
    pub max_iterations: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub model: String,
    /// Sweep as from:to:points.
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: Option<String>,
    /// Parameter value, name=value (repeatable); others come from the preset.
    #[arg(long = "param", value_parser = parse_assignment)]
    pub params: Vec<(String, f64)>,
    /// Noise as abs:<sigma> or rel:<fraction>.
    #[arg(long, default_value = "rel:0.05")]
    pub noise: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AcceptanceArgs {
    /// Run only these criteria (repeatable); default all.
    #[arg(long)]
    pub criterion: Vec<u8>,
    #[arg(long, default_value_t = rydswitch::acceptance::AcceptanceOptions::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Every individual check as a delimited file.
    #[arg(long)]
    pub checks: Option<PathBuf>,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("`{s}` is not name=value"))?;
    let v: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), v))
}

/// Outcome of one subcommand before it is written out.
pub struct Run {
    pub table: String,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
    pub extra_outputs: Vec<PathBuf>,
    pub record: serde_json::Value,
    pub exit_code: u8,
}

impl Run {
    pub fn new(table: String, record: serde_json::Value) -> Self {
        Run { table, seed: None, warnings: Vec::new(), extra_outputs: Vec::new(), record, exit_code: 0 }
    }
}

fn load_preset(g: &Global) -> anyhow::Result<(Preset, String)> {
    match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(rydswitch::Error::Io)?;
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("config");
            let preset = Preset::from_toml_str(name, &text).map_err(rydswitch::Error::Config)?;
            Ok((preset, path.display().to_string()))
        }
        None => Ok((Preset::load(&g.preset, g.preset_dir.as_deref())?, g.preset.clone())),
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<rydswitch::Error>() {
            return match e {
                rydswitch::Error::RankDeficient { .. } => EXIT_NOT_CONVERGED,
                rydswitch::Error::Solver { .. } => EXIT_RUNTIME,
                _ => EXIT_INPUT,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_RUNTIME;
        }
    }
    EXIT_INPUT
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Derive => "derive",
        Command::Spectrum(_) => "spectrum",
        Command::Curve(_) => "curve",
        Command::Montecarlo(_) => "montecarlo",
        Command::Fit(_) => "fit",
        Command::Synth(_) => "synth",
        Command::Acceptance(_) => "acceptance",
    }
}

fn execute(cli: &Cli) -> anyhow::Result<u8> {
    let (preset, source) = load_preset(&cli.global)?;
    let name = subcommand_name(&cli.command);
    let header = format!("rydswitch {} {name}; source: {source}", output::VERSION);
    let mut run = match &cli.command {
        Command::Derive => commands::derive(&preset, &header)?,
        Command::Spectrum(a) => commands::spectrum(a, &preset, &header)?,
        Command::Curve(a) => commands::curve(a, &preset, &header)?,
        Command::Montecarlo(a) => commands::montecarlo(a, &preset, &header)?,
        Command::Fit(a) => commands::fit(a, &preset, &header)?,
        Command::Synth(a) => commands::synth(a, &preset, &header)?,
        Command::Acceptance(a) => commands::acceptance(a, &preset, &header)?,
    };
    for w in &run.warnings {
        log::warn!("{w}");
    }
    if cli.global.strict && !run.warnings.is_empty() && run.exit_code == 0 {
        run.exit_code = EXIT_VALIDITY;
    }

    let sink = Sink { out: cli.global.out.clone(), manifest: cli.global.manifest.clone() };
    sink.write_table(&run.table)?;
    if let Some(path) = sink.manifest_path() {
        let mut outputs: Vec<String> = cli.global.out.iter().map(|p| p.display().to_string()).collect();
        outputs.extend(run.extra_outputs.iter().map(|p| p.display().to_string()));
        let manifest = RunManifest {
            tool: "rydswitch",
            version: output::VERSION,
            subcommand: name.to_string(),
            arguments: std::env::args().skip(1).collect(),
            source,
            seed: run.seed,
            outputs,
            warnings: run.warnings.clone(),
            exit_code: i32::from(run.exit_code),
            timestamp: chrono::Utc::now().to_rfc3339(),
            record: run.record,
        };
        manifest.write(&path)?;
    }
    Ok(run.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
