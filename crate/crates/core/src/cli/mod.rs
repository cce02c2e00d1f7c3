//! Command line front end: `dynwalk <subcommand> [flags]`.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{parse_law, ExperimentConfig, FileConfig, Format, LawSpec, Scalar};

use crate::error::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "dynwalk", version, about = "Biased random walks on dynamical random conductances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Regeneration cycles (default) or one trajectory up to --horizon.
    Simulate(Opts),
    /// Speed estimates and closed-form predictions over a lambda and/or mu grid.
    Sweep(Opts),
    /// Statistical test suite; exits nonzero if any test fails.
    Verify(Opts),
    /// Table of closed-form identities with their largest deviations.
    ValidateClosedForms(Opts),
    /// Pathwise couplings: --kind monotone|dominate|bias-pair|dim-gap.
    CouplingCheck(Opts),
    /// Batch-birth/linear-death return times and tail fit.
    BdCheck(Opts),
}

impl Command {
    fn parts(&self) -> (&'static str, &Opts) {
        match self {
            Command::Simulate(o) => ("simulate", o),
            Command::Sweep(o) => ("sweep", o),
            Command::Verify(o) => ("verify", o),
            Command::ValidateClosedForms(o) => ("validate-closed-forms", o),
            Command::CouplingCheck(o) => ("coupling-check", o),
            Command::BdCheck(o) => ("bd-check", o),
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct Opts {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent streams to split the work over (results depend on this, not on thread count).
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Walker kind (vbrw, nvbrw, cbrw, tasym); for coupling-check the coupling kind.
    #[arg(long)]
    pub kind: Option<String>,
    /// Value, or a grid `start:stop:step` / `a,b,c` for sweep.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub mu: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Torus side length; omit for the infinite lattice.
    #[arg(long)]
    pub m: Option<i64>,
    /// e.g. `two_point:0,1:0.5`, `uniform:0,1`, `point:1`.
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Batch-birth rate for bd-check.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Batch size for bd-check.
    #[arg(long)]
    pub l: Option<u32>,
    /// Smaller sample sizes for verify.
    #[arg(long)]
    pub quick: bool,
    /// Add wall-clock seconds to the JSON summary (makes it non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

impl Opts {
    fn as_file_config(&self) -> Result<FileConfig> {
        Ok(FileConfig {
            experiment: None,
            seed: self.seed,
            replicas: self.replicas,
            out: self.out.clone(),
            format: self.format,
            kind: self.kind.clone(),
            lambda: self.lambda.clone().map(Scalar::Text),
            mu: self.mu.clone().map(Scalar::Text),
            d: self.d,
            m: self.m,
            law: self.law.as_deref().map(parse_law).transpose()?,
            cycles: self.cycles,
            samples: self.samples,
            horizon: self.horizon,
            epsilon: self.epsilon,
            alpha: self.alpha,
            l: self.l,
            quick: self.quick.then_some(true),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Summary<T: Serialize> {
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
    pub result: T,
}

/// What a subcommand produced: a JSON-serializable result, optional CSV rows and checks.
pub(crate) struct Outcome {
    pub result: serde_json::Value,
    pub csv: Option<Vec<u8>>,
    pub checks: Vec<Check>,
}

pub fn resolve(command: &Command) -> Result<ExperimentConfig> {
    let (name, opts) = command.parts();
    let flags = opts.as_file_config()?;
    let merged = match &opts.config {
        Some(p) => flags.over(FileConfig::load(p)?),
        None => flags,
    };
    ExperimentConfig::resolve(name, merged)
}

fn write_to(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

/// Runs one parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let start = std::time::Instant::now();
    let cfg = resolve(&cli.command)?;
    let (name, opts) = cli.command.parts();
    let outcome = match name {
        "simulate" => commands::simulate(&cfg)?,
        "sweep" => commands::sweep(&cfg)?,
        "verify" => commands::verify(&cfg)?,
        "validate-closed-forms" => commands::validate_closed_forms(&cfg)?,
        "coupling-check" => commands::coupling_check(&cfg)?,
        _ => commands::bd_check(&cfg)?,
    };
    let all_pass = outcome.checks.iter().all(|c| c.pass);
    let summary = Summary {
        version: crate::version_string(),
        command: name.to_string(),
        config: cfg.clone(),
        wall_clock_seconds: opts.timing.then(|| start.elapsed().as_secs_f64()),
        checks: outcome.checks,
        all_pass,
        result: outcome.result,
    };
    let mut json = serde_json::to_vec_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    json.push(b'\n');
    match (cfg.format, outcome.csv) {
        (Format::Csv, Some(csv)) => {
            write_to(cfg.out.as_deref(), &csv)?;
            // the summary goes next to the table, or to stderr when the table is on stdout
            match &cfg.out {
                Some(p) => std::fs::write(p.with_extension("summary.json"), &json)?,
                None => std::io::stderr().write_all(&json)?,
            }
        }
        _ => write_to(cfg.out.as_deref(), &json)?,
    }
    Ok(if all_pass { 0 } else { 1 })
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
