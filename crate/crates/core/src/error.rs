use thiserror::Error;

/// Errors raised by model construction, kernel evaluation, sampling and training.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnefyError {
    #[error("domain error in {function}: {message}")]
    Domain {
        function: &'static str,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported combination: activation={activation}, statistic={statistic}, base={base}")]
    UnsupportedTriple {
        activation: String,
        statistic: String,
        base: String,
    },

    #[error("matrix is not positive semidefinite within jitter tolerance")]
    NotPositiveSemidefinite,

    #[error("kernel {kernel} failed at entry ({i}, {j}): {source}")]
    KernelEntry {
        kernel: &'static str,
        i: usize,
        j: usize,
        source: Box<SnefyError>,
    },

    #[error("parameters outside the integrable region: {0}")]
    Integrability(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("degenerate model: zero normalizer (Z = {z:e}, floor = {floor:e})")]
    ZeroNormalizer { z: f64, floor: f64 },

    #[error("exact sampling unsupported for this activation: {0}")]
    UnboundedActivation(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("log density is -inf at data indices {0:?}")]
    NonFiniteDensity(Vec<usize>),

    #[error("training aborted at iteration {iteration}: {message}")]
    TrainingAborted { iteration: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<u64>, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl SnefyError {
    pub(crate) fn domain(function: &'static str, message: impl Into<String>) -> Self {
        SnefyError::Domain {
            function,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        SnefyError::InvalidArgument(message.into())
    }
}

impl From<std::io::Error> for SnefyError {
    fn from(e: std::io::Error) -> Self {
        SnefyError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for SnefyError {
    fn from(e: serde_json::Error) -> Self {
        SnefyError::Parse {
            line: Some(e.line() as u64),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SnefyError>;
