use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("a mesh needs at least 2 subdivisions per side, got {0}")]
    TooCoarse(usize),

    #[error("meshes are not nested: reference n_div {reference} is not a multiple of {coarse}")]
    NotNested { coarse: usize, reference: usize },

    #[error("mesh mismatch: {expected} vs {found} subdivisions")]
    MeshMismatch { expected: usize, found: usize },

    #[error("coefficient vector has length {found}, mesh has {expected} nodes")]
    LengthMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse schedule `{input}`: {reason}")]
    ScheduleParse { input: String, reason: String },

    #[error("malformed restart data at line {line}: {reason}")]
    Restart { line: usize, reason: String },

    #[error("budget C = {budget} is below the first discretization term H_1 = {first_term}")]
    InadmissibleBudget { budget: f64, first_term: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
