use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time {0} is not a finite non-negative number of seconds")]
    InvalidTime(f64),
    #[error("cannot schedule an event at {at}s: the clock is already at {clock}s")]
    ScheduleInPast { at: f64, clock: f64 },
    #[error("event #{seq} at t={time}s failed ({payload}): {message}")]
    HandlerFailed {
        time: f64,
        seq: u64,
        payload: String,
        message: String,
    },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown GPU model `{0}`")]
    UnknownGpuModel(String),
    #[error("preemption rate must be non-negative, got {0}/h")]
    NegativeRate(f64),
    #[error("sweep parameter path `{0}` does not resolve to a numeric scalar")]
    UnresolvedPath(String),
    #[error("scenario is invalid:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Error)]
pub enum AccountingError {
    #[error("billing record for instance {0} is already closed")]
    DoubleClose(u64),
    #[error("no open billing record for instance {0}")]
    NotOpen(u64),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RunError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}
