use std::fmt;

use fedbench_core::Error;

/// A failure mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Diverged(String),
    Io(String),
    Other(String),
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Diverged(_) => EXIT_DIVERGED,
            Failure::Io(_) => EXIT_IO,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Diverged(m) => write!(f, "diverged: {m}"),
            Failure::Io(m) => write!(f, "io error: {m}"),
            Failure::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_divergence() {
            return Failure::Diverged(e.to_string());
        }
        match e {
            Error::Config(_) | Error::Data(_) | Error::Csv { .. } | Error::Dimension { .. } => {
                Failure::Config(e.to_string())
            }
            Error::Io(_) => Failure::Io(e.to_string()),
            Error::Client { ref source, .. } if matches!(**source, Error::Io(_)) => Failure::Io(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}
