use thiserror::Error;

use crate::simplex_solver::KktResiduals;

pub type Result<T, E = CvpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CvpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown point id `{0}`")]
    UnknownPoint(String),

    #[error("degenerate exhaustion: stages {0} and {1} contain the same points")]
    DegenerateExhaustion(usize, usize),

    #[error("kernel construction failed: {0}")]
    Construction(String),

    #[error("decay profile error: {0}")]
    Profile(String),

    #[error("measures live on different spaces (`{0}` vs `{1}`)")]
    SpaceMismatch(String, String),

    #[error("variation violates the volume constraint: total signed mass {0:e}")]
    VolumeConstraint(f64),

    #[error("variation makes the mass at point {point} negative ({mass:e})")]
    Positivity { point: usize, mass: f64 },

    #[error("variation was built on a different base measure")]
    BaseMismatch,

    #[error("problem of size {size} exceeds the limit of {limit}")]
    Size { size: usize, limit: usize },

    #[error("solver did not converge in {iterations} iterations (best value {best_value}, residuals {residuals:?})")]
    SolverFailure {
        iterations: usize,
        best_value: f64,
        best_weights: Vec<f64>,
        residuals: KktResiduals,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<CvpError>,
    },

    #[error("degenerate stage: EL parameter {0:e} is not positive")]
    DegenerateStage(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CvpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CvpError::InvalidInput(msg.into())
    }
}
