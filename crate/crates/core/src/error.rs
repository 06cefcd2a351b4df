use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate lattice")]
    DegenerateLattice,
    #[error("not a sublattice")]
    NotSublattice,
    #[error("dilation is not expansive (smallest eigenvalue modulus {0})")]
    NotExpansive(f64),
    #[error("Cayley singular")]
    CayleySingular,
    #[error("matrix is not orthogonal (deviation {0:e})")]
    NotOrthogonal(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("j_max too small for the sample window: need j_max >= {required}")]
    InsufficientJMax { required: usize },
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("not refinable (residual {residual:e})")]
    NotRefinable { residual: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("incompatible grid: {0}")]
    IncompatibleGrid(String),
    #[error("Nyquist violation: {0}")]
    Nyquist(String),
    #[error("completion failed: {0}")]
    Completion(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("bad grid file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
