//! Command-line runner for the verification pipelines of `pointlab-core`.
//!
//! Every subcommand writes `<cmd>.json`, optionally `<cmd>.csv`, and a
//! `<cmd>.manifest.json` into the output directory and maps its assertions to
//! the process exit code.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod config;
mod manifest;
mod pipelines;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use thiserror::Error;

pub use args::{Cli, Command};
pub use manifest::{Assertion, RunManifest};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "POINTLAB_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pointlab_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use pointlab_core::Error as E;
        match self {
            Self::Usage(_) | Self::Core(E::InvalidParameter(_)) => EXIT_USAGE,
            Self::Core(E::Budget(_) | E::NonConvergence { .. }) => EXIT_BUDGET,
            _ => EXIT_FAILURE,
        }
    }
}

/// What a pipeline hands back for writing.
pub(crate) struct Outcome {
    pub assertions: Vec<Assertion>,
    pub report: serde_json::Value,
    pub csv: Option<Vec<u8>>,
    /// Set when a time or quadrature budget cut the run short.
    pub budget_exhausted: bool,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    if argv.len() <= 1 {
        eprintln!("{}", args::usage());
        return EXIT_USAGE;
    }
    let cli = match parse_with_config(&argv) {
        Ok(cli) => cli,
        Err(Parsed::Exit(code)) => return code,
        Err(Parsed::Error(e)) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

enum Parsed {
    Exit(i32),
    Error(CliError),
}

fn try_parse(argv: &[String]) -> Result<Cli, Parsed> {
    Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        let help = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
        let _ = e.print();
        Parsed::Exit(if help { EXIT_OK } else { EXIT_USAGE })
    })
}

// Config entries are appended after the command line, so they win.
fn parse_with_config(argv: &[String]) -> Result<Cli, Parsed> {
    let cli = try_parse(argv)?;
    let Some(path) = cli.config.clone() else {
        return Ok(cli);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Parsed::Error(e.into()))?;
    let extra = config::config_args(&text).map_err(Parsed::Error)?;
    let mut full = argv.to_vec();
    full.extend(extra);
    try_parse(&full)
}

fn output_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("pointlab-out"))
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build()?;
    let start = Instant::now();
    let (name, params) = cli.command.describe()?;
    let outcome = pool.install(|| pipelines::dispatch(&cli.command))?;
    let duration_s = start.elapsed().as_secs_f64();
    let dir = output_dir(cli);
    write_outputs(&dir, name, params, outcome, duration_s)
}

fn write_outputs(
    dir: &Path,
    name: &str,
    params: serde_json::Map<String, serde_json::Value>,
    outcome: Outcome,
    duration_s: f64,
) -> Result<i32, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let json_name = format!("{name}.json");
    std::fs::write(dir.join(&json_name), manifest::pretty(&outcome.report)?)?;
    files.push(json_name);
    if let Some(csv) = &outcome.csv {
        let csv_name = format!("{name}.csv");
        std::fs::write(dir.join(&csv_name), csv)?;
        files.push(csv_name);
    }
    let seed = params.get("seed").and_then(|v| v.as_u64());
    let all_pass = outcome.assertions.iter().all(|a| a.pass);
    for a in &outcome.assertions {
        println!(
            "{:<5} {:<36} value = {:<14.6e} bound = {:.6e}",
            if a.pass { "PASS" } else { "FAIL" },
            a.name,
            a.value,
            a.bound
        );
    }
    let manifest = RunManifest {
        cmd: name.to_string(),
        params,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_s,
        assertions: outcome.assertions,
        files,
    };
    std::fs::write(dir.join(format!("{name}.manifest.json")), manifest::pretty(&manifest)?)?;
    Ok(if outcome.budget_exhausted {
        EXIT_BUDGET
    } else if all_pass {
        EXIT_OK
    } else {
        EXIT_ASSERTION
    })
}
