use thiserror::Error;

/// Failures of a subcommand, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file or flag. Exit 1.
    #[error("config error: {0}")]
    Schema(String),
    /// A run produced a result that contradicts a known bound. Exit 2.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// Named invariants failed in the self test. Exit 2.
    #[error("self test failed: {}", .0.join(", "))]
    Invariants(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] nmm_core::Error),
    #[error(transparent)]
    Tof(#[from] nmm_tof::ToFError),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Integrity(_) | CliError::Invariants(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<nmm_bench::BenchError> for CliError {
    fn from(e: nmm_bench::BenchError) -> Self {
        use nmm_bench::BenchError as B;
        match e {
            B::Integrity { .. } | B::DegenerateScale => CliError::Integrity(e.to_string()),
            B::Io(m) => CliError::Io(m),
            other => CliError::Run(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
