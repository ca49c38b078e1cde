use std::path::PathBuf;

/// Errors raised by the signal chain, the simulator and the decoders.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(
        "sample rate {sample_rate} Hz is below 20 x f_high ({f_high} Hz); resample the trace first"
    )]
    RateGuard { sample_rate: f64, f_high: f64 },

    #[error("non-finite filter input {0}")]
    NonFinite(f64),

    #[error("window [{t_start}, {t_end}] s lies outside the trace")]
    WindowOutside { t_start: f64, t_end: f64 },

    #[error("no bout found in window [{t_start}, {t_end}] s")]
    NoBout { t_start: f64, t_end: f64 },

    #[error("degenerate bout: max_t equals min_t")]
    DegenerateBout,

    #[error("traces do not share a time base: {0}")]
    Mismatch(String),

    #[error("no feature: no sensor produced a slope-detection pulse")]
    NoFeature,

    #[error("missing feature component: {0}")]
    MissingFeature(String),

    #[error("calibration not monotone: {0}")]
    NotMonotone(String),

    #[error("model not fitted: {0}")]
    Unfitted(String),

    #[error("unknown sensor model for gas {0}")]
    UnknownGas(String),

    #[error("{stage}: {subject}: {cause}")]
    Stage {
        stage: &'static str,
        subject: String,
        cause: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Tags `self` with the pipeline stage and the item it was working on.
    pub fn at(self, stage: &'static str, subject: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            subject: subject.into(),
            cause: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
