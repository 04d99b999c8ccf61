//! Command-line front end: configuration, report documents and the run driver.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | configuration or usage error (bad flag, bad value, unknown config key, too few trials) |
//! | 3 | numerical degeneracy (zero-norm projection, non-normalizable state) |
//! | 4 | computation undefined for the inputs (e.g. no coincidences to post-select) |
//! | 5 | I/O error reading a config or writing a report or table |

pub mod config;
pub mod report;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

pub use config::{parse_config, ConfigError, Mode, Parsed, RunConfig, Source};
pub use report::{ReportDocument, ReportError, SCHEMA_VERSION};
pub use run::{execute, identity_checks, RunOutput};

use crate::error::LabError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Lab(#[from] LabError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report error: {0}")]
    Report(#[from] ReportError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Unreadable { .. }) => 5,
            CliError::Config(_) => 2,
            CliError::Lab(e) => match e {
                LabError::TooFewTrials { .. } | LabError::InvalidParameter(_) | LabError::MixedKinds { .. } => 2,
                LabError::NumericalDegeneracy(_) | LabError::NotNormalized { .. } => 3,
                _ => 4,
            },
            CliError::Io { .. } => 5,
            CliError::Report(_) => 4,
        }
    }
}

fn write_file(
    path: &PathBuf,
    write: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    use std::io::Write;
    let io = |source| CliError::Io {
        path: path.clone(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut out = std::io::BufWriter::new(file);
    write(&mut out).map_err(io)?;
    out.flush().map_err(io)
}

/// Parses, runs and writes outputs. Returns the text shown on stdout.
pub fn run_cli<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match parse_config(args)? {
        Parsed::Info(text) => return Ok(text),
        Parsed::Run(c) => c,
    };
    let started = Instant::now();
    let output = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| LabError::InvalidParameter(format!("thread pool: {e}")))?
            .install(|| execute(&config))?,
        None => execute(&config)?,
    };
    let elapsed = started.elapsed();

    if let Some(path) = &config.out {
        let json = output.document.to_json()?;
        write_file(path, |w| {
            use std::io::Write;
            w.write_all(json.as_bytes())?;
            w.write_all(b"\n")
        })?;
    }
    if let (Some(path), Some(table)) = (&config.table_out, &output.table) {
        write_file(path, |w| table.write(w))?;
    }
    let mut text = output.document.render_text();
    text.push_str(&format!("wall time: {:.3} s\n", elapsed.as_secs_f64()));
    Ok(text)
}

/// Entry point for the binary: prints results or a one-line error and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run_cli(args) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("bell-lab: {e}");
            e.exit_code()
        }
    }
}
