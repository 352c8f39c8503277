use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("near-singular shifted matrix: smallest pivot {min_pivot:e} below threshold {threshold:e} (shift {shift})")]
    NearSingular {
        shift: f64,
        min_pivot: f64,
        threshold: f64,
    },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("vector norm {norm:e} is below the underflow tolerance")]
    ZeroVector { norm: f64 },

    #[error("subspace is trivial (dimension zero)")]
    DimZero,

    #[error(
        "rank deficient basis: smallest Gram eigenvalue {min_eigenvalue:e} below {tolerance:e}"
    )]
    RankDeficient { min_eigenvalue: f64, tolerance: f64 },

    #[error("projection between subspaces is not an isomorphism")]
    NotIsomorphic,

    #[error("subspaces use different inner products")]
    MetricMismatch,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("bad coefficient: {0}")]
    BadCoefficient(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("oracle spectrum has {available} values, {required} needed")]
    InsufficientSpectrum { available: usize, required: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("degenerate gap between consecutive cluster values {0} and {1}")]
    DegenerateGap(f64, f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix market parse error (line {line}): {message}")]
    MatrixMarket { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NearSingular { .. }
                | Error::NotSpd(_)
                | Error::RankDeficient { .. }
                | Error::NotIsomorphic
                | Error::ZeroVector { .. }
        )
    }
}
