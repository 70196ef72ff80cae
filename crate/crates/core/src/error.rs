use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("ill-conditioned matrix ({what}): condition number {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { what: String, cond: f64, limit: f64 },

    #[error("singular block at index {0} while inverting a block-triangular operator")]
    SingularBlock(usize),

    #[error("system response is not realisable by state feedback (residual {0:.3e})")]
    NotRealisable(f64),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not return a solution: {0}")]
    NotSolved(String),

    #[error("combinatorial budget exceeded: {count} vertex sequences > {limit}")]
    Budget { count: f64, limit: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
