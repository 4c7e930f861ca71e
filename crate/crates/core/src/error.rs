use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("reset rate is zero, the excitation integral diverges")]
    DivergentIntegral,

    #[error("integration failed at t = {t:.6e} s (step {step:.3e} s): {reason}")]
    IntegrationFailure { t: f64, step: f64, reason: String },

    #[error("fit failed ({context}): {reason}")]
    FitFailure { context: String, reason: String },

    #[error("matrix inversion failed (condition number {condition:.3e})")]
    InversionFailure { condition: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("calibration step {step} failed: {source}")]
    CalibrationStep {
        step: u8,
        #[source]
        source: Box<Error>,
    },

    #[error("calibration step {0} has no data")]
    MissingStep(u8),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn fit(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::FitFailure {
            context: context.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_step(self, step: u8) -> Self {
        match self {
            e @ Error::CalibrationStep { .. } => e,
            e @ Error::MissingStep(_) => e,
            e => Error::CalibrationStep {
                step,
                source: Box::new(e),
            },
        }
    }
}
