//! The `regulab` command line.
//!
//! Exit codes: 0 success, 1 usage or output error, 2 fixture or input
//! error, 3 internal-consistency error.

mod commands;
mod expect;
mod fixture;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

pub use commands::{run_command, Command, Property, Report, RunOptions, Table};
pub use expect::{check_expected, ExpectationCheck};
pub use fixture::{builtin_names, load_fixture, parse_fixture, Expected, Fixture, FixtureKind, Parameters, BUILTINS};
pub use output::{report_json, write_report, Format};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FIXTURE: i32 = 2;
pub const EXIT_CONSISTENCY: i32 = 3;

/// Overrides `--threads` when set.
pub const THREADS_ENV: &str = "REGULAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "regulab", version, about = "Hölder regularity, Łojasiewicz fits and parametric VIs on fixtures")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Fixture file, or `builtin:NAME`.
    #[arg(long)]
    pub fixture: String,
    /// Named box to use as the primary analysis box.
    #[arg(long = "box")]
    pub box_name: Option<String>,
    /// Grid points per axis for every box used.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub resolution: Option<u32>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output file (json) or directory (csv-bundle).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Property for estimate-holder.
    #[arg(long, value_enum)]
    pub property: Option<Property>,
    /// Print the JSON report on stdout (the default when --out is absent).
    #[arg(long)]
    pub stdout: bool,
    /// Include wall-clock time in the report; the output is then not byte-stable.
    #[arg(long)]
    pub timing: bool,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Consistency(_) => EXIT_CONSISTENCY,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_FIXTURE,
    }
}

fn usage(msg: impl std::fmt::Display) -> i32 {
    eprintln!("regulab: {msg}");
    EXIT_USAGE
}

/// Worker count: the environment variable, then `--threads`, then rayon's default.
fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        },
        _ => match flag {
            Some(0) => Err("--threads must be positive".into()),
            other => Ok(other),
        },
    }
}

/// Runs a command inside a pool of `threads` workers (rayon's default when `None`).
pub fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> crate::Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Invalid { what: "thread pool", reason: e.to_string() })?;
    Ok(pool.install(f))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if cli.property.is_some() && cli.command != Command::EstimateHolder {
        return usage("--property only applies to estimate-holder");
    }
    if cli.format == Format::CsvBundle && cli.out.is_none() {
        return usage("--format csv-bundle needs --out DIR");
    }
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t.is_finite()) {
            return usage(format!("--tol must be positive and finite, got {t}"));
        }
    }
    let threads = match thread_count(cli.threads) {
        Ok(t) => t,
        Err(msg) => return usage(msg),
    };
    let fixture = match load_fixture(&cli.fixture) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("regulab: {e}");
            return exit_code(&e);
        }
    };
    let opts = RunOptions {
        box_name: cli.box_name.clone(),
        resolution: cli.resolution.map(|r| r as usize),
        tol: cli.tol,
        property: cli.property.unwrap_or_default(),
    };
    let start = Instant::now();
    let outcome = run_in_pool(threads, || run_command(cli.command, &fixture, &opts)).and_then(|r| r);
    let mut report = match outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("regulab: {e}");
            return exit_code(&e);
        }
    };
    if cli.timing {
        report.timing_seconds = Some(start.elapsed().as_secs_f64());
    }
    if let Some(out) = &cli.out {
        if let Err(e) = write_report(&report, cli.format, out) {
            eprintln!("regulab: {e}");
            return exit_code(&e);
        }
    }
    if cli.stdout || cli.out.is_none() {
        match report_json(&report) {
            Ok(s) => print!("{s}"),
            Err(e) => {
                eprintln!("regulab: {e}");
                return exit_code(&e);
            }
        }
    }
    EXIT_OK
}
