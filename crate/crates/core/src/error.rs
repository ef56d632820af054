use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported interaction: degree {degree} exceeds the quartic cap")]
    UnsupportedInteraction { degree: usize },

    #[error("order ({m},{n}) is not stored (highest stored order {max}); apply a closure")]
    OutOfOrder { m: usize, n: usize, max: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incompatible states: {0}")]
    IncompatibleStates(String),

    #[error("closure misuse: order ({m},{n}) is in range for closure order {order}")]
    ClosureMisuse { m: usize, n: usize, order: usize },

    #[error("insufficient order: {0}")]
    InsufficientOrder(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("divergence at t = {time}: non-finite value in Gamma({m},{n})")]
    Divergence { time: f64, m: usize, n: usize },

    #[error("oracle cutoff insufficient at t = {time}: boundary weight {weight:e} exceeds {limit:e}")]
    CutoffInsufficient { time: f64, weight: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status for the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidModel(_)
            | Error::UnsupportedInteraction { .. }
            | Error::InvalidInput(_)
            | Error::IncompatibleStates(_)
            | Error::Configuration(_)
            | Error::Config { .. }
            | Error::Json(_)
            | Error::InsufficientOrder(_)
            | Error::OutOfOrder { .. }
            | Error::ClosureMisuse { .. } => 2,
            Error::NumericalBreakdown(_) | Error::Divergence { .. } => 3,
            Error::CutoffInsufficient { .. } => 4,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}
