use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular mass matrix (det = {0:e})")]
    SingularMassMatrix(f64),

    #[error("integration produced a non-finite state at t = {0}")]
    Integration(f64),

    #[error("obstacle is in contact with the arm (d = 0)")]
    Collision,

    #[error("robust safe control is infeasible: {0}")]
    Infeasible(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
