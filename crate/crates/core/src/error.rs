use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid bandwidth {0}: bandwidths must be positive")]
    InvalidBandwidth(f64),

    #[error("empty neighborhood for target {target}")]
    EmptyNeighborhood { target: String },

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("objective evaluation failed at theta={theta} for record {record}")]
    ObjectiveEvaluation { theta: f64, record: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("regression error: {0}")]
    Regression(String),

    #[error("degenerate group for voyage {voyage}: group standard deviation {sigma:e}")]
    DegenerateGroup { voyage: String, sigma: f64 },

    #[error("insufficient voyages: have {have}, need at least {need}")]
    InsufficientVoyages { have: usize, need: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidBandwidth(_) => "invalid-bandwidth",
            Error::EmptyNeighborhood { .. } => "empty-neighborhood",
            Error::SchemeMismatch(_) => "scheme-mismatch",
            Error::ObjectiveEvaluation { .. } => "objective-evaluation",
            Error::Config(_) => "configuration",
            Error::Schema(_) => "schema",
            Error::Regression(_) => "regression",
            Error::DegenerateGroup { .. } => "degenerate-group",
            Error::InsufficientVoyages { .. } => "insufficient-voyages",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    /// Numerical failures arise from the data rather than from how the run
    /// was configured.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EmptyNeighborhood { .. }
                | Error::SchemeMismatch(_)
                | Error::ObjectiveEvaluation { .. }
                | Error::Regression(_)
                | Error::DegenerateGroup { .. }
                | Error::InsufficientVoyages { .. }
        )
    }
}
