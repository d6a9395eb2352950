use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid privacy parameters: {0}")]
    InvalidPrivacy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver did not converge within {max_iter} iterations")]
    NonConvergence { max_iter: usize },

    #[error("noise plan infeasible: {0}")]
    Infeasible(String),

    #[error("rank deficient second moment: need {needed} eigenvalues above floor, found {found}")]
    RankDeficient { needed: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;
