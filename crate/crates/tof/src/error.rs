use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToFError {
    #[error(transparent)]
    Core(#[from] nmm_core::Error),
    #[error("invalid setup: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PGM: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ToFError>;
