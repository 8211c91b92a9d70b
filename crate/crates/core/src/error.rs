use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum FhdError {
    #[error("invalid mesh request: {0}")]
    Mesh(String),
    #[error("quadrature of degree {0} is not stocked (max 8)")]
    Quadrature(usize),
    #[error("invalid space: {0}")]
    Space(String),
    #[error("invalid material input: {0}")]
    Material(String),
    #[error("assembly: {0}")]
    Assembly(String),
    #[error("{stage}: {source}")]
    Solve {
        stage: &'static str,
        #[source]
        source: LinalgError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("verification: {0}")]
    Verify(String),
}

impl FhdError {
    pub(crate) fn solve(stage: &'static str) -> impl FnOnce(LinalgError) -> FhdError {
        move |source| FhdError::Solve { stage, source }
    }
}

pub type Result<T, E = FhdError> = std::result::Result<T, E>;
