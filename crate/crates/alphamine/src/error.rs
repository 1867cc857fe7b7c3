use std::path::Path;

use alphamine_core::backtest::BacktestError;
use alphamine_core::panel::PanelError;
use alphamine_core::pipeline::RunError;
use alphamine_core::pool::PoolError;

/// Every failure the command line reports, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("{0}")]
    Run(String),
}

impl Error {
    pub fn io(path: &Path, e: std::io::Error) -> Error {
        Error::Io(format!("{}: {e}", path.display()))
    }

    /// Process exit code; see the table in the README.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Config(_) => 3,
            Error::Io(_) => 4,
            Error::Schema(_) | Error::Data(_) => 5,
            Error::Checkpoint(_) => 6,
            Error::Run(_) => 7,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Schema(_) => "schema",
            Error::Data(_) => "data",
            Error::Checkpoint(_) => "checkpoint",
            Error::Run(_) => "run",
        }
    }

    /// The error on one line: `error[kind]: message`.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.kind(), msg.trim())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<PanelError> for Error {
    fn from(e: PanelError) -> Self {
        match e {
            PanelError::Argument(m) => Error::Config(m),
            other => Error::Data(other.to_string()),
        }
    }
}

impl From<RunError> for Error {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(m) => Error::Config(m),
            other => Error::Run(other.to_string()),
        }
    }
}

impl From<PoolError> for Error {
    fn from(e: PoolError) -> Self {
        Error::Run(format!("pool: {e}"))
    }
}

impl From<BacktestError> for Error {
    fn from(e: BacktestError) -> Self {
        Error::Run(format!("backtest: {e}"))
    }
}
