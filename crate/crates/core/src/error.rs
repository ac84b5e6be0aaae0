use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An exponential factor left the representable range of `f64`.
    #[error("exponential saturated at |s| = {s}: |s|^beta exceeds ln(f64::MAX)")]
    Saturation { s: f64 },

    #[error("exponential saturated at node {node} (value {s})")]
    NodeSaturation { node: usize, s: f64 },

    #[error("adaptive quadrature did not converge on [{a}, {b}] (estimated error {error:e})")]
    Quadrature { a: f64, b: f64, error: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no sign change of {what} within [{lo:e}, {hi:e}]")]
    BracketNotFound { what: &'static str, lo: f64, hi: f64 },

    #[error("root iteration limit reached near {last:e}")]
    RootIterationLimit { last: f64 },

    #[error("no Nehari branch along the visited directions: {0}")]
    NoBranch(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("ray maximum not found: {0}")]
    InnerMaxNotFound(String),

    #[error("Moser support of radius {delta} around the center exceeds the domain (inradius {inradius})")]
    SupportExceedsDomain { delta: f64, inradius: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
