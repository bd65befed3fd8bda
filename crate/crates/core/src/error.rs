use thiserror::Error;

/// Malformed model or initial state.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid JSON model: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model shape: {0}")]
    Shape(String),
    #[error("coefficient {0}: {1}")]
    Coefficient(String, String),
    #[error("mark space: {0}")]
    Marks(String),
    #[error("initial state: {0}")]
    InitialState(String),
}

/// Failures while sampling noise or integrating along a path.
#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid time grid: {0}")]
    Config(String),
    #[error("NaN in {what} at t = {time}")]
    NotANumber { what: &'static str, time: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("relative jump size {value} <= -1 at t = {time}")]
    Domain { value: f64, time: f64 },
    #[error("species index {0} out of range")]
    Species(usize),
    #[error("initial state has {got} components, model has {want}")]
    Dimension { got: usize, want: usize },
    #[error("malformed path dump: {0}")]
    Dump(String),
}

/// Refusals from the Monte Carlo estimators.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unmet prerequisite: {0}")]
    Prerequisite(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}
