//! Command failures, flattened to a single diagnostic line on exit.

use std::fmt;
use std::path::PathBuf;

use opc::OpcError;

/// Anything that aborts a command. `main` prints the `Display` form as one
/// line on stderr, prefixed by a category tag, and exits nonzero.
#[derive(Debug)]
pub enum CliError {
    /// A config file failed to parse or validate; `line` is 1-based when the
    /// offence sits on a specific line.
    Config {
        path: PathBuf,
        line: Option<usize>,
        what: String,
    },
    /// A model file failed to parse or describes an inconsistent model.
    Model {
        path: PathBuf,
        line: Option<usize>,
        what: String,
    },
    /// Reading or writing an artifact failed at the filesystem level.
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A command needs an artifact that no earlier command has produced.
    Missing { path: PathBuf, hint: String },
    /// A library call failed mid-run.
    Run(OpcError),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { path, line, what } => match line {
                Some(n) => write!(f, "config: {}:{n}: {what}", path.display()),
                None => write!(f, "config: {}: {what}", path.display()),
            },
            CliError::Model { path, line, what } => match line {
                Some(n) => write!(f, "model file: {}:{n}: {what}", path.display()),
                None => write!(f, "model file: {}: {what}", path.display()),
            },
            CliError::Io { path, source } => write!(f, "io: {}: {source}", path.display()),
            CliError::Missing { path, hint } => {
                write!(f, "missing artifact: {}: {hint}", path.display())
            }
            CliError::Run(e @ OpcError::SingularMatrix(_)) => {
                write!(f, "run: {e}; perturb dt or the measured data and refit")
            }
            CliError::Run(e) => write!(f, "run: {e}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io { source, .. } => Some(source),
            CliError::Run(e) => Some(e),
            _ => None,
        }
    }
}

impl From<OpcError> for CliError {
    fn from(e: OpcError) -> Self {
        CliError::Run(e)
    }
}
