use thiserror::Error;

/// Errors shared across the solver, family, and derivative layers.
#[derive(Error, Debug)]
pub enum Error {
    #[error("matrix B is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("input contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric: relative asymmetry {asymmetry:.3e} exceeds 1e-12")]
    Asymmetric { asymmetry: f64 },

    #[error("eigenvalue {nu} is degenerate: gap {gap:.3e} below tolerance {tol:.3e} (pair {nu}, {eta})")]
    DegenerateEigenvalue {
        nu: usize,
        eta: usize,
        gap: f64,
        tol: f64,
    },

    #[error("bordered matrix A - lambda*B + xx' is numerically singular; lambda is likely not simple")]
    SingularBordered,

    #[error("principal submatrix of A - lambda*B (dropping row/col {dropped}) is numerically singular")]
    SingularSubmatrix { dropped: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("family does not have an identity B (or nonzero dB/ddB)")]
    NotIdentityB,

    #[error("singular value {nu} is degenerate: gap {gap:.3e} below tolerance {tol:.3e}")]
    DegenerateSingularValue { nu: usize, gap: f64, tol: f64 },

    #[error("singular value {nu} is numerically zero ({value:.3e}); derivatives undefined")]
    ZeroSingularValue { nu: usize, value: f64 },

    #[error("F is rank deficient: only {found} of {expected} singular values exceed tolerance")]
    RankDeficient { found: usize, expected: usize },

    #[error("contingency table contains a negative cell at ({row}, {col})")]
    NegativeCell { row: usize, col: usize },

    #[error("table rows have unequal lengths (row {row})")]
    RaggedRows { row: usize },

    #[error("table is empty")]
    EmptyTable,

    #[error("profile weights sum to {sum}, expected 1 within 1e-12")]
    WeightSumError { sum: f64 },

    #[error("pattern shape error: {0}")]
    PatternShapeError(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("statistic Hessian missing; bias formula needs second derivatives")]
    MissingHessian,

    #[error("family is not affine in the cell proportions; chain rule shortcut does not apply")]
    NonAffineFamily,

    #[error("rank drop: only {found} of {expected} eigenvalues exceed tolerance")]
    RankDrop { found: usize, expected: usize },

    #[error("argument outside the domain of the discrepancy function: {0}")]
    DomainError(String),

    #[error("function evaluation failed at perturbed point: {source}")]
    EvalFailure {
        #[source]
        source: Box<Error>,
        theta: Vec<f64>,
    },

    #[error("trace sweeps require a single-parameter family (p = {p})")]
    NotSingleParameter { p: usize },

    #[error("discrepancy function violates the family conditions at 1: {0}")]
    InvalidDiscrepancy(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
