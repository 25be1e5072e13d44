use thiserror::Error;

/// Errors surfaced by grid construction, solvers and the filter pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (grid sizes, partition levels, basis sizes, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A solver left its stability envelope (norm blow-up guard).
    #[error("instability: {0}")]
    Instability(String),

    /// Filter mass collapsed (vanishing unnormalized density or ESS).
    #[error("filter degeneracy: {0}")]
    Degeneracy(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
