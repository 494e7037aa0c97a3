use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    #[error("non-finite value at t = {t}, node {node}: solver blew up")]
    BlowUp { t: f64, node: usize },

    #[error("compact-cone coefficient {coefficient:.3e} exceeds ceiling at t = {t}")]
    CeilingExceeded { t: f64, coefficient: f64 },

    #[error("weighted norm diverges: {0}")]
    Divergent(String),

    #[error("quadrature did not converge: estimate {value:.6e}, error {error:.3e}")]
    Quadrature { value: f64, error: f64 },

    #[error("value below floor: {0}")]
    BelowFloor(String),

    #[error("trajectory ends at t = {reached} before requested t = {requested}")]
    Truncated { reached: f64, requested: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn outside(msg: impl Into<String>) -> Error {
    Error::OutsideDomain(msg.into())
}
