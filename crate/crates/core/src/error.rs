use thiserror::Error;

use crate::gridworld::Observation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid configuration: {0}")]
    InvalidGrid(String),

    #[error("observation {0} lies outside the grid")]
    OutOfBounds(Observation),

    #[error("observation {0} is terminal")]
    TerminalObservation(Observation),

    #[error("invalid language: {0}")]
    InvalidLanguage(String),

    #[error("incompatible languages: {0}")]
    IncompatibleLanguages(String),

    #[error("atom {atom} is empty in the {side} language")]
    EmptyAtom { side: &'static str, atom: usize },

    #[error("invalid point cloud: {0}")]
    InvalidPointCloud(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "sinkhorn did not converge after {iterations} iterations (marginal residual {residual:e})"
    )]
    SinkhornNotConverged { iterations: usize, residual: f64 },

    #[error("transport instance of size {rows}x{cols} exceeds the exact solver limit")]
    InstanceTooLarge { rows: usize, cols: usize },

    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),

    #[error("unsupported format version {0}")]
    FormatVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
