//! `enhq`: command-line driver for the enhanced-quantization workbench.
//!
//! Exit status: 0 on success, 1 for invalid configuration, 2 for a failed run.

mod error;
mod options;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use error::CliError;
use options::{
    load_file, DynamicsOptions, ExperimentConfig, FileSettings, InequalityOptions, MetricOptions, RotsymOptions,
    SelftestOptions, WcpOptions,
};
use output::{write_json, write_table, Format};

const DEFAULT_OUT: &str = "enhq-out";

#[derive(Parser)]
#[command(name = "enhq", version, about = "Coherent-state geometry, weak correspondence and enhanced classical dynamics")]
struct Cli {
    /// JSON config file with the command's options; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: enhq-out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of the data tables [default: csv]
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fubini–Study metric and Gaussian curvature sweep
    Metric(MetricOptions),
    /// Enhanced Hamiltonian surface and hbar scaling
    Wcp(WcpOptions),
    /// Classical vs. enhanced trajectories and singularity report
    Dynamics(DynamicsOptions),
    /// Shuffle-symmetry demo of the rotationally symmetric model
    Rotsym(RotsymOptions),
    /// Scan of the multiplicative field inequality
    Inequality(InequalityOptions),
    /// Invariant suite of every module
    Selftest(SelftestOptions),
}

fn merged<T: DeserializeOwned + Default>(
    flags: T,
    file: Option<&Path>,
    command: &str,
    overlay: fn(T, T) -> T,
) -> Result<(T, FileSettings), CliError> {
    match file {
        Some(path) => {
            let (base, settings) = load_file::<T>(path, command)?;
            Ok((overlay(flags, base), settings))
        }
        None => Ok((flags, FileSettings::default())),
    }
}

fn resolve(cli: Cli) -> Result<(ExperimentConfig, PathBuf, Format), CliError> {
    let file = cli.config.as_deref();
    let (config, settings) = match cli.command {
        Command::Metric(o) => {
            let (o, s) = merged(o, file, "metric", MetricOptions::overlay)?;
            (ExperimentConfig::Metric(o.resolve()?), s)
        }
        Command::Wcp(o) => {
            let (o, s) = merged(o, file, "wcp", WcpOptions::overlay)?;
            (ExperimentConfig::Wcp(o.resolve()?), s)
        }
        Command::Dynamics(o) => {
            let (o, s) = merged(o, file, "dynamics", DynamicsOptions::overlay)?;
            (ExperimentConfig::Dynamics(o.resolve()?), s)
        }
        Command::Rotsym(o) => {
            let (o, s) = merged(o, file, "rotsym", RotsymOptions::overlay)?;
            (ExperimentConfig::Rotsym(o.resolve()?), s)
        }
        Command::Inequality(o) => {
            let (o, s) = merged(o, file, "inequality", InequalityOptions::overlay)?;
            (ExperimentConfig::Inequality(o.resolve()?), s)
        }
        Command::Selftest(o) => {
            let (o, s) = merged(o, file, "selftest", SelftestOptions::overlay)?;
            (ExperimentConfig::Selftest(o.resolve()?), s)
        }
    };
    let out = cli.out.or(settings.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let format = cli.format.or(settings.format).unwrap_or_default();
    Ok((config, out, format))
}

/// Caps the worker pool at `ENHQ_THREADS`.
fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("ENHQ_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("ENHQ_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failure(format!("thread pool: {e}")))
}

fn header(config: &ExperimentConfig) -> Value {
    json!({
        "command": config.name(),
        "version": enhq::VERSION,
        "config": config,
    })
}

fn run(config: &ExperimentConfig, out: &Path, format: Format) -> Result<String, CliError> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let outcome = match run::execute(config) {
        Ok(o) => o,
        Err(e) => {
            if let CliError::Failure(_) = e {
                let mut diag = header(config);
                diag["wall_time_s"] = json!(start.elapsed().as_secs_f64());
                diag["error"] = json!({ "kind": e.kind(), "message": e.message() });
                write_json(out, &format!("{}_error.json", config.name()), &diag)?;
            }
            return Err(e);
        }
    };
    let artifacts: Vec<String> = outcome
        .tables
        .iter()
        .map(|(stem, table)| write_table(out, stem, table, format))
        .collect::<Result<_, _>>()?;
    let mut summary = header(config);
    summary["wall_time_s"] = json!(start.elapsed().as_secs_f64());
    summary["verdict"] = json!(outcome.verdict);
    summary["passed"] = json!(!outcome.failed);
    summary["artifacts"] = json!(artifacts);
    summary["result"] = outcome.result;
    write_json(out, &format!("{}_summary.json", config.name()), &summary)?;
    if outcome.failed {
        return Err(CliError::Failure(outcome.verdict));
    }
    Ok(outcome.verdict)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = configure_threads()
        .and_then(|()| resolve(cli))
        .and_then(|(config, out, format)| run(&config, &out, format));
    match result {
        Ok(verdict) => {
            println!("{verdict}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
