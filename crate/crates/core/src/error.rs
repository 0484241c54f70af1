use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{what}: n = {n} exceeds the guard of {max}")]
    SizeGuard {
        what: &'static str,
        n: usize,
        max: usize,
    },

    #[error("integration failed at t = {t}: {message}")]
    Integration { t: f64, message: String },

    #[error("shooting did not converge at gamma0 = {failed_gamma0} (last converged: {last_converged_gamma0:?})")]
    Shooting {
        failed_gamma0: f64,
        last_converged_gamma0: Option<f64>,
        last_schedule: Option<Box<crate::schedule::ScheduleFunction>>,
    },

    #[error("degenerate spectrum: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Parse { .. } => "parse",
            Error::SizeGuard { .. } => "size-guard",
            Error::Integration { .. } => "integration",
            Error::Shooting { .. } => "shooting",
            Error::Degenerate(_) => "degenerate",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
