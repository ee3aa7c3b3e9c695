use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no guided mode: {0}")]
    NoGuidedMode(String),

    #[error("modal surrogate invalid: {0}")]
    SurrogateInvalid(String),

    #[error("phase undefined: {0}")]
    UndefinedPhase(String),

    #[error("degenerate device state: {0}")]
    DegenerateState(String),

    #[error("matrix is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("permittivity {re} + {im}i has no passive square root")]
    Branch { re: f64, im: f64 },

    #[error("calibration rejected: {0}")]
    CalibrationRejected(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by bad inputs or configuration rather than a
    /// numerical failure during evaluation.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::InvalidInput(_) | Error::Config(_) | Error::SizeMismatch { .. })
    }
}
