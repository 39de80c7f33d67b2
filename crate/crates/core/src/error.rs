use thiserror::Error;

/// Errors raised by the numerical routines and the command-line layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("accuracy error: {0}")]
    Accuracy(String),
    #[error("positivity violation at t = {t}: min/max = {ratio:.3e}")]
    Positivity { t: f64, ratio: f64 },
    #[error("internal error: {0}")]
    Internal(String),
    #[error("config error{}: {msg}", location(.line, .field))]
    Config {
        line: Option<usize>,
        field: Option<String>,
        msg: String,
    },
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
    /// A sweep point failed; `value` is the swept exponent.
    #[error("sweep point {value}: {inner}")]
    Sweep { value: f64, inner: Box<Error> },
}

fn location(line: &Option<usize>, field: &Option<String>) -> String {
    match (line, field) {
        (Some(l), Some(f)) => format!(" (line {l}, field `{f}`)"),
        (Some(l), None) => format!(" (line {l})"),
        (None, Some(f)) => format!(" (field `{f}`)"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            field: Some(field.into()),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            msg: err.to_string(),
        }
    }

    /// Process exit code used by the `rslab` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } => 1,
            Error::Sweep { inner, .. } => inner.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
