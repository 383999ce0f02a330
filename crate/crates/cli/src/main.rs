//! `nelson-lab` command-line driver.
//!
//! Exit codes: 0 success, 1 invalid input (arguments, config, size guards),
//! 2 numerical failure or a failed check.

mod commands;
mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nelson_lab::config::LabConfig;
use nelson_lab::LabError;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Budget {
    Small,
    Desk,
    Large,
}

impl Budget {
    fn path_factor(self) -> f64 {
        match self {
            Budget::Small => 0.1,
            Budget::Desk => 1.0,
            Budget::Large => 4.0,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nelson-lab", version, about = "Numerical laboratory for relativistic Nelson-type models")]
struct Cli {
    /// TOML configuration; built-in desk defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Monte Carlo path budget: small (x0.1), desk (x1) or large (x4).
    #[arg(long, global = true, value_enum, default_value_t = Budget::Desk)]
    budget: Budget,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pair-potential tables and E_diag.
    Effective,
    /// Ground state, cluster thresholds and binding verdict.
    Spectrum,
    /// Coupling-window scan.
    StabilityScan,
    /// Total-momentum dispersion curves.
    Fiber,
    /// Levy-process and Feynman-Kac battery.
    FkVerify,
    /// Truncated-Fock energy-comparison certificates and kappa trend.
    FockCertify,
    /// Acceptance suite.
    Accept {
        /// Restrict to these criteria, e.g. `--criteria 1,2,5`.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Effective => "effective",
            Command::Spectrum => "spectrum",
            Command::StabilityScan => "stability-scan",
            Command::Fiber => "fiber",
            Command::FkVerify => "fk-verify",
            Command::FockCertify => "fock-certify",
            Command::Accept { .. } => "accept",
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<LabConfig, CliError> {
    let cfg = match path {
        None => LabConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
            let value: toml::Value = toml::from_str(&text)
                .map_err(|e| CliError::Validation(format!("malformed config {}: {e}", p.display())))?;
            serde_path_to_error::deserialize(value).map_err(|e| {
                let key = e.path().to_string();
                CliError::Validation(format!("config key `{key}`: {}", e.into_inner()))
            })?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.scale_paths(cli.budget.path_factor());
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let mut out = output::Emitter::new(&cli.out)?;
    out.seed("global", cfg.seed);
    let name = cli.command.name();
    let result = match &cli.command {
        Command::Effective => commands::effective(&cfg, &mut out),
        Command::Spectrum => commands::spectrum(&cfg, &mut out),
        Command::StabilityScan => commands::stability_scan(&cfg, &mut out),
        Command::Fiber => commands::fiber(&cfg, &mut out),
        Command::FkVerify => commands::fk_verify(&cfg, &mut out),
        Command::FockCertify => commands::fock_certify(&cfg, &mut out),
        Command::Accept { criteria } => commands::accept(&cfg, criteria, &mut out),
    };
    // reports of failed checks are still written, so the manifest goes out
    // either way
    let manifest = out.finish(name, &cfg)?;
    eprintln!("{} files written to {}", manifest.outputs.len(), cli.out.display());
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
