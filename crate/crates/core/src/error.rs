use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The weighted segment carries too little weight (or too few points)
    /// to determine the requested quantity.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidSpec(String),

    #[error("scene spec infeasible: {0}")]
    SpecInfeasible(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("shape sets differ: {0}")]
    ShapeSetMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
