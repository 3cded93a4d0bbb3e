use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] nmm_core::Error),
    #[error("degenerate energy scale: sampled median equals the optimum")]
    DegenerateScale,
    #[error(
        "integrity violation in case {case}, method {method}, restart {restart}: \
         E_final = {e_final} lies below the planted optimum {e_star}"
    )]
    Integrity {
        case: String,
        method: String,
        restart: usize,
        e_final: f64,
        e_star: f64,
    },
    #[error("instance generation failed: {0}")]
    Generation(String),
    #[error("invalid case label '{0}' (expected e.g. 3a)")]
    Label(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
