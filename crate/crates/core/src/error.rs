use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field has {found} values but the mesh has {expected} nodes")]
    MeshMismatch { expected: usize, found: usize },

    #[error("kernel evaluated on the diagonal x = y")]
    Diagonal,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("{0}")]
    Coverage(String),

    #[error("step to t = {time} did not converge after {iterations} iterations (best residual {residual:e})")]
    NonConvergence {
        time: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite value encountered while stepping to t = {time}")]
    NotFinite { time: f64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
