use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty portfolio")]
    EmptyPortfolio,
    #[error("row {row}, column '{column}': {message}")]
    Malformed {
        row: usize,
        column: String,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("duplicate obligor id '{0}'")]
    DuplicateId(String),
    #[error("invalid obligor '{id}': {message}")]
    InvalidObligor { id: String, message: String },
    #[error("invalid discount: {0}")]
    InvalidDiscount(String),
    #[error("sector '{sector}': {message}")]
    InvalidSector { sector: String, message: String },
    #[error("unit must be positive, got {0}")]
    InvalidUnit(f64),
    #[error("degenerate sector '{0}': all band intensities are zero")]
    DegenerateSector(String),
    #[error("grid size {given} too small, need at least {required}")]
    GridTooSmall { given: usize, required: usize },
    #[error("grid size {0} is not a power of two")]
    GridNotPowerOfTwo(usize),
    #[error("unit mismatch: {0} vs {1}")]
    UnitMismatch(f64, f64),
    #[error("pmf entry {index} is {value:e}, below the round-off floor")]
    NegativeMass { index: usize, value: f64 },
    #[error("pmf sums to {0}, exceeding 1")]
    ExcessMass(f64),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("exceedance probability {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("grid too small for requested tail: truncation mass {truncation:e} >= {eps}")]
    TailOffGrid { truncation: f64, eps: f64 },
    #[error("degenerate portfolio: total variance contribution is zero")]
    DegeneratePortfolio,
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),
}
