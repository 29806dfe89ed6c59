use thiserror::Error;

/// Errors raised by the offline and online pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {}", .0.join("; "))]
    InvalidGame(Vec<String>),

    #[error("pseudo-gradient matrix is not positive definite (min eigenvalue of symmetric part {min_eig:.3e})")]
    AssumptionViolated { min_eig: f64 },

    #[error("{what} did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("active constraint rows are linearly dependent")]
    RankDeficient,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("linear program failure: {0}")]
    LpFailure(String),

    #[error("polyhedron is empty")]
    EmptySet,

    #[error("feasible input set is empty at the given initial state")]
    Infeasible,

    #[error("brute-force enumeration refused: {p} constraints exceeds the limit of {limit}")]
    TooManyConstraints { p: usize, limit: usize },

    #[error("random game generation failed after {attempts} attempts")]
    GenerationFailure { attempts: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
