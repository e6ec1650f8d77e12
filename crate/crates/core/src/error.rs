use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{what} must equal 1, found {found}")]
    Normalization { what: &'static str, found: String },

    #[error("{0}: no closed form here, build it through the Fock-space oracle")]
    Unsupported(String),

    #[error("truncation at dimension {dim} is inadequate: {detail}")]
    Truncation { dim: usize, detail: String },

    #[error("quadrature did not converge with {nodes} nodes per axis (last relative change {change:e})")]
    Convergence { nodes: usize, change: f64 },

    #[error("integration variable {value} lies outside [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("perturbative order {0} is not supported (maximum 2)")]
    UnsupportedOrder(usize),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
