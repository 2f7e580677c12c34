// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! `simulate`: run, validate and list the cavity-QED chemistry scenarios.
//!
//! Exit status: 0 success, 1 I/O or internal failure, 2 configuration
//! error, 3 dimension cap exceeded, 4 solver instability.

pub mod output;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use cqed_chem::config::{parse_config, validate_config, ConfigError};
use cqed_chem::dynamics::{DynamicsError, TimeSeries, IMAG_RESIDUE_TOL, INSTABILITY_DRIFT, NORM_TOL};
use cqed_chem::hilbert::HilbertError;
use cqed_chem::models::{ChannelKind, ChannelSpec, ModelError, ScenarioConfig, ScenarioId, SolverKind};
use cqed_chem::operators::HERMITIAN_TOL;
use cqed_chem::reduction::{compare_curves, reduce_bundle, ReductionError};

/// Dimension cap unless `SIM_MAX_DIM` says otherwise.
pub const DEFAULT_CAP: usize = 4096;
pub const CAP_ENV: &str = "SIM_MAX_DIM";

#[derive(Debug, Parser)]
#[command(name = "simulate", version, about = "Cavity-QED chemistry simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write series.csv, series.json, plot.svg.
    Run(RunArgs),
    /// Check a configuration and report the state-space dimension.
    Validate(Source),
    /// Print the available scenario ids.
    ListScenarios,
}

#[derive(Debug, Clone, Args)]
pub struct Source {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario id; overrides the file's `scenario`.
    #[arg(long)]
    pub scenario: Option<ScenarioId>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    /// Dissipative channel (repeatable); replaces the file's channel list.
    #[arg(long = "channel")]
    pub channels: Vec<ChannelKind>,
    /// Keep this fraction of the basis (amplitude-ranked, connectivity-repaired).
    #[arg(long = "reduce")]
    pub keep_fraction: Option<f64>,
    /// With --reduce, also simulate the full space and write both curves.
    #[arg(long)]
    pub compare_full: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    TooLarge(String),
    Unstable(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Other(_) => 1,
            Self::Config(_) => 2,
            Self::TooLarge(_) => 3,
            Self::Unstable(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::TooLarge(m) | Self::Unstable(m) | Self::Other(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::TooLarge { .. } => Self::TooLarge(format!("{e}; raise {CAP_ENV} to allow it")),
            ConfigError::Model(m) => m.into(),
            e => Self::Config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Hilbert(HilbertError::TooLarge { cap }) => {
                Self::TooLarge(format!("space exceeds the dimension cap of {cap} states; raise {CAP_ENV} to allow it"))
            }
            ModelError::Dynamics(d) => d.into(),
            // Everything else traces back to configuration values.
            e => Self::Config(e.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Unstable { .. } => Self::Unstable(e.to_string()),
            e => Self::Other(e.to_string()),
        }
    }
}

impl From<ReductionError> for CliError {
    fn from(e: ReductionError) -> Self {
        match e {
            ReductionError::Dynamics(d) => d.into(),
            e => Self::Other(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

/// Dimension cap from `SIM_MAX_DIM`, else [`DEFAULT_CAP`].
pub fn dimension_cap() -> Result<usize, CliError> {
    match std::env::var(CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("{CAP_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_CAP),
    }
}

fn read_source(src: &Source) -> Result<String, CliError> {
    match &src.config {
        Some(p) => fs::read_to_string(p).map_err(|e| io_error(p, e)),
        None if src.scenario.is_some() => Ok(String::new()),
        None => Err(CliError::Config("give --config <file> or --scenario <id>".into())),
    }
}

/// Configuration after file defaults and command-line overrides.
pub fn resolve_config(args: &RunArgs) -> Result<ScenarioConfig, CliError> {
    let text = read_source(&args.source)?;
    let mut cfg = parse_config(&text, args.source.scenario)?;
    if let Some(s) = args.solver {
        cfg.run.solver = Some(s);
    }
    if !args.channels.is_empty() {
        cfg.channels = args.channels.iter().map(|&kind| ChannelSpec { kind, gamma: None }).collect();
    }
    if args.horizon.is_some() {
        cfg.run.horizon = args.horizon;
    }
    if args.samples.is_some() {
        cfg.run.samples = args.samples;
    }
    if args.dt.is_some() {
        cfg.run.dt = args.dt;
    }
    if args.keep_fraction.is_some() {
        cfg.reduction.keep_fraction = args.keep_fraction;
    }
    if args.compare_full {
        cfg.reduction.compare_full = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Paths of the artifacts written by [`run`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: PathBuf,
    pub reduction: Option<PathBuf>,
    pub dim_full: usize,
    pub dim_simulated: usize,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

pub fn run(args: &RunArgs) -> Result<Artifacts, CliError> {
    let cfg = resolve_config(args)?;
    if let Some(w) = cfg.coupling.rwa_warning() {
        log::warn!("{w}");
    }
    let cap = dimension_cap()?;
    let bundle = cfg.build(cap)?;
    let dim_full = bundle.dim();
    let (series, dim_simulated, report) = match cfg.reduction.keep_fraction {
        None => (bundle.simulate()?, dim_full, None),
        Some(_) => {
            let (reduced, _, mut report) = reduce_bundle(&bundle, &cfg.reduction)?;
            let dim = reduced.dim();
            let series = if cfg.reduction.compare_full {
                let (full, red) = std::thread::scope(|s| {
                    let full = s.spawn(|| bundle.simulate());
                    let red = reduced.simulate();
                    (full.join().expect("full-space run panicked"), red)
                });
                let (full, red) = (full?, red?);
                report.comparison = compare_curves(&full, &red);
                let mut both = TimeSeries::new(Vec::new());
                both.times = full.times.clone();
                both.merge(&full, ":full");
                both.merge(&red, ":reduced");
                both
            } else {
                reduced.simulate()?
            };
            (series, dim, Some(report))
        }
    };
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let info = output::RunInfo {
        config: &cfg,
        solver: cfg.solver().as_str(),
        dim_full,
        dim_simulated,
        tolerances: output::Tolerances {
            norm: NORM_TOL,
            hermitian: HERMITIAN_TOL,
            imaginary_residue: IMAG_RESIDUE_TOL,
            instability_trace_drift: INSTABILITY_DRIFT,
            dt: cfg.dt(),
        },
    };
    let csv = args.out.join("series.csv");
    let json = args.out.join("series.json");
    let svg = args.out.join("plot.svg");
    write(&csv, &output::to_csv(&series))?;
    write(&json, &output::to_json(&series, &info))?;
    let title = format!("{} ({}, dim {dim_simulated})", cfg.scenario, cfg.solver().as_str());
    write(&svg, &plot::render(&series, &title))?;
    let reduction = match &report {
        Some(r) => {
            let p = args.out.join("reduction.json");
            write(&p, &output::report_json(r))?;
            Some(p)
        }
        None => None,
    };
    Ok(Artifacts { csv, json, svg, reduction, dim_full, dim_simulated })
}

/// `OK, dim=…` plus any warnings, one per line.
pub fn validate(src: &Source) -> Result<Vec<String>, CliError> {
    let text = read_source(src)?;
    let v = validate_config(&text, src.scenario, dimension_cap()?)?;
    let mut lines = vec![format!(
        "OK, dim={} (scenario {}, solver {})",
        v.dim,
        v.config.scenario,
        v.config.solver().as_str()
    )];
    lines.extend(v.warnings.into_iter().map(|w| format!("warning: {w}")));
    Ok(lines)
}

pub fn list_scenarios() -> Vec<String> {
    ScenarioId::ALL.iter().map(|id| format!("{:<12} {}", id.as_str(), id.summary())).collect()
}

/// Dispatch a parsed command line; returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(args) => run(&args).map(|a| {
            println!("wrote {}", a.csv.display());
            println!("wrote {}", a.json.display());
            println!("wrote {}", a.svg.display());
            if let Some(r) = a.reduction {
                println!("wrote {}", r.display());
            }
            println!("dim_full={} dim_simulated={}", a.dim_full, a.dim_simulated);
        }),
        Command::Validate(src) => validate(&src).map(|lines| lines.iter().for_each(|l| println!("{l}"))),
        Command::ListScenarios => {
            list_scenarios().iter().for_each(|l| println!("{l}"));
            Ok(())
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
