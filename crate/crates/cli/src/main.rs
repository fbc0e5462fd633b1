//! `ebtd`: reproducible reports for empirical Bayes truth discovery.

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use config::{read_file_config, Cli, Command, ConditionsConfig, EvaluateConfig, SimulateConfig};
use output::Report;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Io(String),
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Io(_) => 2,
            Self::Assertion(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid input: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::Assertion(m) => write!(f, "self-check failed: {m}"),
        }
    }
}

impl From<ebtd::Error> for CliError {
    fn from(e: ebtd::Error) -> Self {
        use ebtd::Error::*;
        match e {
            Io(_) | ParseError { .. } | DuplicateGroundTruth { .. } => Self::Io(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.common.config {
        Some(path) => read_file_config(path)?,
        None => Default::default(),
    };
    let common = cli.common.merge(file.common);
    let threads = config::parse_threads(common.threads.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;

    let report: Report = match cli.command {
        Command::DemoTable1 => commands::demo_table1()?,
        Command::Simulate(a) => {
            let cfg = SimulateConfig::resolve(&common, a.merge(file.simulate))?;
            pool.install(|| commands::simulate(&cfg))?
        }
        Command::Evaluate(a) => {
            let cfg = EvaluateConfig::resolve(&common, a.merge(file.evaluate))?;
            pool.install(|| commands::evaluate(&cfg))?
        }
        Command::Conditions(a) => {
            let cfg = ConditionsConfig::resolve(&common, a.merge(file.conditions))?;
            pool.install(|| commands::conditions(&cfg))?
        }
    };
    report.emit(common.out.as_deref(), stdout)?;
    if !report.failed_checks.is_empty() {
        return Err(CliError::Assertion(report.failed_checks.join("; ")));
    }
    Ok(())
}

/// Runs the command line `args` and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    1
                }
            };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "ebtd: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    let stdout = std::io::stdout();
    let code = run(std::env::args_os(), &mut stdout.lock(), &mut std::io::stderr());
    std::process::exit(code);
}
