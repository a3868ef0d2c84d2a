use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Shapes of two operands are incompatible (channel counts, kernel
    /// larger than input, length mismatches).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration key or value could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    /// A sequence directory or annotation file could not be loaded.
    #[error("load error: {0}")]
    Load(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    /// True for errors caused by bad user input (files, config, arguments)
    /// as opposed to internal failures. The CLI maps these to exit code 2.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, CoreError::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
