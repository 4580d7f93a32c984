//! Configuration, file formats and command drivers for `qmetro`.
//!
//! The binary in `main.rs` is a thin clap layer over [`run`]; everything it
//! does is reachable from tests through this library.

pub mod config;
pub mod output;
pub mod run;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    /// Some work items failed; what succeeded was written and marked partial.
    #[error("partial results: {0}")]
    Partial(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) | CliError::Io(_) => 2,
            CliError::Partial(_) => 3,
        }
    }
}

impl From<qmetro_core::Error> for CliError {
    fn from(e: qmetro_core::Error) -> Self {
        use qmetro_core::Error as E;
        match e {
            E::InvalidParameter { .. } | E::Config(_) | E::DimensionOverflow { .. } => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("json: {e}"))
    }
}
