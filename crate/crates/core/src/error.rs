use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("flow direction undefined for zero equivalent stress")]
    UndefinedDirection,

    #[error("return map did not converge after {iterations} iterations (q_trial = {q_trial:e} Pa, dt = {dt:e} s, residual = {residual:e})")]
    SolverFailure {
        iterations: usize,
        q_trial: f64,
        dt: f64,
        residual: f64,
    },

    #[error("element {element} is inverted (jacobian determinant {det_j:e})")]
    FatalGeometry { element: usize, det_j: f64 },

    #[error("simulation diverged at t = {time:e} s: {reason}")]
    SimulationDiverged { time: f64, reason: String },

    #[error("non-finite activation at time step {step}")]
    NumericFailure { step: usize },

    #[error("correlation undefined for a constant series")]
    UndefinedCorrelation,

    #[error("{what} not found: {path}")]
    MissingArtifact { what: &'static str, path: PathBuf },

    #[error("{failed} of {total} campaign runs failed")]
    CampaignFailed { failed: usize, total: usize },

    #[error("training stopped: {0}")]
    TrainingAborted(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
