use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not antisymmetric (deviation {deviation:.3e})")]
    NotAntisymmetric { deviation: f64 },

    #[error("matrix is not orthogonal (deviation {deviation:.3e})")]
    NotOrthogonal { deviation: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Majorana mask has odd weight {0}")]
    OddWeightMask(usize),

    #[error("triple product vanishes for a non-orthogonal pair; re-anchor against another reference state")]
    SingularTriple,

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("elliptic modulus {0} outside [0, 1)")]
    ModulusOutOfRange(f64),

    #[error("spectral gap {0} outside (0, 1]")]
    GapOutOfRange(f64),

    #[error("{what}: dimension {dim} exceeds the limit {limit}")]
    DimensionTooLarge { what: &'static str, dim: usize, limit: usize },

    #[error("{what}: size {size} exceeds the budget {budget}")]
    BudgetExceeded { what: &'static str, size: usize, budget: usize },

    #[error("Gram matrix has no eigenvalue above the conditioning floor")]
    DegenerateGram,

    #[error("operator cannot be represented in the operator basis (residual {residual:.3e})")]
    RepresentationFailure { residual: f64 },

    #[error("invalid model at `{path}`: {reason}")]
    InvalidModel { path: String, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
