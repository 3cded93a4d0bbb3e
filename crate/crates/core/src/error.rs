use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numerical failure{}: {context}", fmt_index(*.index))]
    Numerical {
        index: Option<usize>,
        context: String,
    },

    #[error("objective is NaN at x = {x}")]
    NanAt { x: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate geometry: weight {index} is zero")]
    DegenerateGeometry { index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("subproblem for coordinate {index} failed: {reason}")]
    Step { index: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

fn fmt_index(index: Option<usize>) -> String {
    match index {
        Some(i) => format!(" at coordinate {i}"),
        None => String::new(),
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
