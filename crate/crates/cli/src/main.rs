//! `cjlab`: runs one experiment per invocation and writes a JSON envelope
//! holding the schema version, the resolved configuration and the result.
//!
//! Exit codes: 0 success, 1 the run's own check failed, 2 invalid input,
//! 3 insufficient numerical resolution, 64 usage error.

mod commands;
mod config;
mod kernels;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use config::Params;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Core(cjlab::Error),
}

impl From<cjlab::Error> for CliError {
    fn from(e: cjlab::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Validation(_) => 2,
            CliError::Core(e) if e.is_resolution() => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Validation(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "cjlab", version, about = "Numerical experiments on Christ–Journé multilinear forms and their kernels")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, as key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Write the JSON output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Write the CSV table here (growth, mixing).
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
}

/// Shortcuts for the most common keys; any key can also be given with --set.
#[derive(Args, Debug, Default)]
struct Flags {
    #[arg(long)]
    kernel: Option<String>,
    /// Kernel expression file (see README).
    #[arg(long)]
    kernel_file: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    perm: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Grid points per axis.
    #[arg(long)]
    points: Option<String>,
    /// Monte Carlo samples.
    #[arg(long)]
    samples: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("kernel", self.kernel.clone()),
            ("kernel_file", self.kernel_file.clone()),
            ("n", self.n.clone()),
            ("d", self.d.clone()),
            ("eps", self.eps.clone()),
            ("perm", self.perm.clone()),
            ("seed", self.seed.clone()),
            ("points", self.points.clone()),
            ("samples", self.samples.clone()),
        ]
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Besov-type kernel seminorm 𝓑_ε.
    Norm(Flags),
    /// K-norm of a kernel K(α, x).
    Knorm(Flags),
    /// Dyadic decomposition K = Σ_j ς_j^{(2^{−j})}.
    Decompose(Flags),
    /// Decomposition followed by the annulus reconstruction residual.
    Reconstruct(Flags),
    /// Evaluate the form Λ[ς](b) on seeded random fields.
    Form(Flags),
    /// Truncated d-commutator at probe points.
    Commutator(Flags),
    /// Adjoint identity Λ[ℓ_ϖς](b) = Λ[ς](b_ϖ) on seeded random fields.
    AdjointCheck(Flags),
    /// Method-of-rotations reduction with Ω = sin.
    RotationCheck(Flags),
    /// Growth of the CJ form's normalized size in n.
    Growth(Flags),
    /// Schur-type, SI and annular norms of a built-in bikernel.
    Schur(Flags),
    /// Carleson norm of a built-in weight.
    Carleson(Flags),
    /// Mixing identity for a built-in flow.
    Mixing(Flags),
}

impl Command {
    fn split(&self) -> (&'static str, &Flags) {
        match self {
            Command::Norm(f) => ("norm", f),
            Command::Knorm(f) => ("knorm", f),
            Command::Decompose(f) => ("decompose", f),
            Command::Reconstruct(f) => ("reconstruct", f),
            Command::Form(f) => ("form", f),
            Command::Commutator(f) => ("commutator", f),
            Command::AdjointCheck(f) => ("adjoint-check", f),
            Command::RotationCheck(f) => ("rotation-check", f),
            Command::Growth(f) => ("growth", f),
            Command::Schur(f) => ("schur", f),
            Command::Carleson(f) => ("carleson", f),
            Command::Mixing(f) => ("mixing", f),
        }
    }
}

fn check_writable(path: &Path) -> Result<(), CliError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CliError::Validation(format!("{}: directory does not exist", path.display())));
    }
    Ok(())
}

fn write_to(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("CJLAB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Validation(format!("CJLAB_THREADS = {v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let (name, flags) = cli.command.split();
    let params = Params::resolve(name, cli.config.as_deref(), &cli.sets, flags.pairs())?;
    if matches!(name, "growth" | "mixing") && params.opt_str("seed").is_none() {
        return Err(CliError::Validation(format!("`{name}` requires --seed")));
    }
    for path in cli.output.iter().chain(&cli.csv) {
        check_writable(path)?;
    }
    configure_threads()?;
    let outcome = commands::run(name, &params)?;
    let envelope = json!({
        "schema_version": SCHEMA_VERSION,
        "command": name,
        "config": params.map(),
        "result": outcome.result,
    });
    let text = serde_json::to_string_pretty(&envelope).map_err(|e| CliError::Validation(e.to_string()))? + "\n";
    match &cli.output {
        Some(path) => write_to(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &cli.csv {
        let table = outcome
            .csv
            .ok_or_else(|| CliError::Validation(format!("`{name}` produces no CSV table")))?;
        write_to(path, &table)?;
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cjlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
