use thiserror::Error;

/// Errors raised by timesteppers and the superstructures built on them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in map output (entry {index})")]
    NonFiniteOutput { index: usize },

    #[error("non-finite value in map input (entry {index})")]
    NonFiniteInput { index: usize },

    #[error("zero direction in Jacobian-vector product")]
    ZeroDirection,

    #[error("dense Jacobian requested for dimension {dim} (limit {limit})")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("unknown parameter `{0}`")]
    MissingParameter(String),

    #[error("not a fixed point: residual {residual:.3e} exceeds {limit:.1e}")]
    NotAFixedPoint { residual: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CFL violation: dt = {dt:.4e} exceeds bound {bound:.4e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("negative concentration {value:.3e} in cell {cell}")]
    NegativeConcentration { cell: usize, value: f64 },

    #[error("loading {value:.6e} outside [0, q_sat] in cell {cell}")]
    LoadingOutOfBounds { cell: usize, value: f64 },

    #[error("eigenvalue iteration did not converge ({found} of {total} values found)")]
    NoConvergence { found: usize, total: usize },

    #[error("degenerate tangent: consecutive branch points coincide")]
    DegenerateTangent,

    #[error("corrector failed after {iterations} iterations (residual {residual:.3e})")]
    CorrectorFailed { iterations: usize, residual: f64 },

    #[error("slow basis is full (m_max = {m_max})")]
    BasisFull { m_max: usize },

    #[error("initial fixed-point solve failed: {0}")]
    InitialSolveFailed(String),

    #[error("continuation step underflow (ds = {ds:.3e})")]
    StepUnderflow { ds: f64 },

    #[error("unstable envelope: chord norm grew more than 10x for 3 consecutive rounds")]
    UnstableEnvelope,

    #[error("runs are not comparable: {0}")]
    IncomparableRuns(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
