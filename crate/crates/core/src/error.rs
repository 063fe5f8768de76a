use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;
/// Same value as `EX_USAGE` from sysexits.
pub const EXIT_UNKNOWN_COMMAND: i32 = 64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A command name the runner does not know.
    #[error("unknown command '{0}'")]
    UnknownCommand(String),

    /// A value or configuration failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// An enumeration or search would exceed its supported size.
    #[error("capacity exceeded: {what} needs {requested}, limit is {limit}")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    /// Input outside the conversion range.
    #[error("input {value} outside range [0, {upper})")]
    Range { value: f64, upper: f64 },

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatch estimation produced values that cannot be meaningful.
    #[error("mismatch estimation diverged at {component}: {value}")]
    EstimationDiverged { component: String, value: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownCommand(_) => EXIT_UNKNOWN_COMMAND,
            Error::Capacity { .. } => EXIT_CAPACITY,
            Error::Validation(_) | Error::Range { .. } | Error::Domain(_) | Error::Json(_) => {
                EXIT_VALIDATION
            }
            Error::EstimationDiverged { .. } | Error::Io(_) | Error::Csv(_) => EXIT_RUNTIME,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
