use std::fmt;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum KsdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("gradient is exactly zero")]
    ZeroGradient,

    #[error("reduced curvature matrix is identically zero")]
    DegenerateCurvature,

    #[error("objective is not finite at the starting point")]
    InvalidStart,

    #[error("infeasible subset plan: {0}")]
    InvalidPlan(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{0}")]
    Config(ConfigError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl KsdError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            KsdError::NumericalOverflow(_)
                | KsdError::NotPositiveDefinite { .. }
                | KsdError::DegenerateCurvature
                | KsdError::InvalidStart
        )
    }
}

/// A configuration file problem, with the offending line when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), message: message.into() }
    }

    pub fn general(message: impl Into<String>) -> Self {
        ConfigError { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config error at line {line}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl From<ConfigError> for KsdError {
    fn from(e: ConfigError) -> Self {
        KsdError::Config(e)
    }
}

pub type Result<T> = std::result::Result<T, KsdError>;
