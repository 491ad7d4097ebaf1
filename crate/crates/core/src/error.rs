use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the crate.
///
/// Variants fall into three classes that the command-line front end maps to
/// distinct exit codes: invalid input, mathematically infeasible requests, and
/// numerical failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for sequence of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate error budget: alpha + beta = {0} must be < 1")]
    DegenerateBudget(f64),

    #[error("empty alternative: r^2 = {radius_sq} must be < a_1^-2 = {max_sq}")]
    EmptyAlternative { radius_sq: f64, max_sq: f64 },

    #[error("truncation too small: the extremal solution uses all {0} coordinates")]
    TruncationTooSmall(usize),

    #[error("radius too small for bandwidth rule: even D = 1 violates the constraint")]
    RadiusTooSmall,

    #[error("too few Monte Carlo samples: {got} < {min}")]
    TooFewSamples { got: usize, min: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Whether the error reflects a mathematically infeasible request rather
    /// than bad input or a numerical breakdown.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBudget(_)
                | Error::EmptyAlternative { .. }
                | Error::TruncationTooSmall(_)
                | Error::RadiusTooSmall
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}
