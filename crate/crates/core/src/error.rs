use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid variance vector: {0}")]
    InvalidSigma(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e}")]
    QuadratureNonConvergence { estimate: f64, error: f64 },

    #[error("row {row} has zero degree; lower the drop threshold")]
    ZeroDegree { row: usize },

    /// Every computed eigenvalue lies at or below delta, so K0 is undetermined.
    #[error("need more eigenvalues: all {computed} computed values are <= delta")]
    InsufficientSpectrum { computed: usize },

    #[error("delta {delta} violates delta < min sigma_i^-2 = {bound}")]
    DeltaViolatesConstraint { delta: f64, bound: f64 },

    #[error("eigensolver converged {converged} of {requested} requested pairs")]
    SolverNonConvergence { converged: usize, requested: usize },

    #[error("spectrum growth cap {cap} reached with K0 >= {k0_lower_bound}")]
    GrowthCapReached { cap: usize, k0_lower_bound: usize },

    #[error("point is effectively isolated: kernel denominator {denominator:e} below floor")]
    Isolated { denominator: f64 },

    #[error("embedding is not monotone on [0, 1]")]
    NonMonotoneEmbedding,

    #[error("missing reference spectrum: {0}")]
    MissingReference(String),

    #[error("empty table")]
    EmptyTable,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
