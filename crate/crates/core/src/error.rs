use std::path::PathBuf;

/// Every failure the library reports.
///
/// The CLI maps these onto process exit codes, see [`ForgeError::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index overflow: n = {requested} exceeds the largest admissible n = {max_admissible}")]
    IndexOverflow { requested: usize, max_admissible: usize },

    #[error("sequence too short: need {required} values, have {available}")]
    SequenceTooShort { required: usize, available: usize },

    #[error("{}:{line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("construction failed at level {level}: {message} (largest observed deviation {worst})")]
    ConstructionFailed { level: u32, message: String, worst: f64 },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ForgeError> = std::result::Result<T, E>;

impl ForgeError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ForgeError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ForgeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 construction, 4 verification, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ForgeError::Config(_) | ForgeError::Schedule(_) | ForgeError::Parse { .. } => 2,
            ForgeError::ConstructionFailed { .. } => 3,
            ForgeError::Verification(_) => 4,
            _ => 1,
        }
    }
}
