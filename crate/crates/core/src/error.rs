use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mask half-width {half_width} needs 2L+1 <= N, got N = {side}")]
    MaskTooLarge { half_width: usize, side: usize },

    #[error("annulus of inner radius {radius} does not fit a torus of side {side}")]
    AnnulusWraps { radius: usize, side: usize },

    #[error("Dirichlet ball of radius {radius} does not fit a torus of side {side}")]
    BallTooLarge { radius: f64, side: usize },

    #[error("torus of side {side} is too small for T = {t} (need N >= 8 sqrt(T))")]
    TorusTooSmall { side: usize, t: f64 },

    #[error("solver did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("zero-order term vanishes but the right-hand side has nonzero mass {mass:.3e}")]
    IncompatibleRhs { mass: f64 },

    #[error("operation requires dimension {expected}, got {actual}")]
    WrongDimension { expected: usize, actual: usize },

    #[error("finite-difference step {step:.3e} is below 1e-8")]
    StepUnderflow { step: f64 },

    #[error("enumeration over {configurations} configurations exceeds the limit")]
    EnumerationTooLarge { configurations: f64 },

    #[error("log-log fit needs strictly positive values, got {value}")]
    NonPositiveValue { value: f64 },

    #[error("log-log fit needs at least 3 points, got {count}")]
    TooFewPoints { count: usize },

    #[error("invalid coefficient law: {0}")]
    InvalidLaw(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fields live on different lattices")]
    LatticeMismatch,

    #[error("invariant violated for {lineage}: {what}")]
    InvariantViolation { what: String, lineage: String },

    #[error("sample {lineage}: {source}")]
    Sample {
        lineage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps a per-sample failure with the lineage of the offending field.
    pub fn in_sample(self, lineage: &impl std::fmt::Display) -> Self {
        match self {
            e @ (Error::Sample { .. } | Error::InvariantViolation { .. }) => e,
            e => Error::Sample {
                lineage: lineage.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// True for configuration problems, as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
