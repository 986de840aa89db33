use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Design matrix is rank deficient (or numerically so).
    #[error("singular design: {0}")]
    SingularDesign(String),

    /// Input lengths or shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionError(String),

    /// Two series have no common span.
    #[error("series spans do not overlap: {0}")]
    NoOverlap(String),

    /// Frequencies disagree or cannot be inferred.
    #[error("frequency error: {0}")]
    FrequencyError(String),

    /// A requested window contains no observations.
    #[error("empty window: {0}")]
    EmptyWindow(String),

    /// |rho| >= 1 where a stationary AR(1) is required.
    #[error("non-stationary autocorrelation coefficient {0}")]
    NonStationary(f64),

    /// The GLS system (or its covariance) is singular.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Every grid candidate failed.
    #[error("grid search failed: {0}")]
    SearchFailed(String),

    /// Non-positive residual variance where a log is needed.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Domain violation in the inputs.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Bootstrap block longer than the series.
    #[error("invalid block length: {0}")]
    InvalidBlock(String),

    /// Not enough observations for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A numerical routine lost stability; the payload names the site.
    #[error("numerical error: {0}")]
    NumericalError(String),

    /// A model parameter violates its admissible range.
    #[error("parameter error: {0}")]
    ParameterError(String),

    /// Malformed input file; carries the offending line number.
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
