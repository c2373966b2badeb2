use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum VfarError {
    #[error("point {point} lies outside the basis domain [{lo}, {hi}]")]
    Domain { point: f64, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model is not stationary: spectral radius {radius} >= 1")]
    Nonstationary { radius: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("block FISTA diverged at iteration {iteration}: objective {objective}; reduce the step size")]
    Divergence { iteration: usize, objective: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl VfarError {
    /// True for failures that come from the numerics rather than from
    /// malformed input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            VfarError::Nonstationary { .. }
                | VfarError::Singular(_)
                | VfarError::Numerical(_)
                | VfarError::Divergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, VfarError>;
