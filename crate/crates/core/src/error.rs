use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("geometry evaluation failed at {point:?}: {reason}")]
    Geometry { point: Vec<f64>, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("coefficient error: {0}")]
    Coefficient(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("reconstruction error: {0}")]
    Reconstruction(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quadrature did not converge on [{a}, {b}] (estimated error {error:e})")]
    Quadrature { a: f64, b: f64, error: f64 },

    #[error("{} path(s) failed; first failure at path {}: {}", .0.len(), .0[0].0, .0[0].1)]
    Paths(Vec<(u64, String)>),
}

pub type Result<T> = std::result::Result<T, Error>;
