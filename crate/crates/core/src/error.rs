use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Configuration problem; `key` names the offending config key.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("overflow guard: exponent {exponent:.3e} exceeds 700")]
    Overflow { exponent: f64 },

    #[error("argument {arg} outside tabulated range [-{limit}, {limit}]")]
    TableRange { arg: f64, limit: f64 },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("insufficient replicates: {0}")]
    InsufficientReplicates(String),

    #[error("insufficient samples: got {got}, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("malformed dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    /// Numerical failures map to exit status 3; configuration to 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureFailure(_)
                | Error::Overflow { .. }
                | Error::TableRange { .. }
                | Error::Divergence(_)
                | Error::InsufficientReplicates(_)
                | Error::InsufficientSamples { .. }
                | Error::DegenerateFit(_)
        )
    }
}
