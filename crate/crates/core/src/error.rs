use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Every particle carries zero weight; the representation has collapsed.
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("no bayesian update has been performed yet")]
    NoUpdates,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("no points")]
    NoPoints,

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
