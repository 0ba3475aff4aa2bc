use std::fmt;

use bosonkernel::Error;

/// Failure category, which fixes the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Config => 1,
            Self::Data => 2,
            Self::Numerical => 3,
        }
    }
}

/// An error labelled with the pipeline stage that raised it.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub stage: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, stage: &'static str, message: impl Into<String>) -> Self {
        Self { kind, stage, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, "config", message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error in {}: {}", kind_name(self.kind), self.stage, self.message)
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Config => "config",
        ErrorKind::Data => "data",
        ErrorKind::Numerical => "numerical",
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a stage label to core errors. Errors with an obvious category
/// keep it; the rest fall back to `default`.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str, default: ErrorKind) -> CliResult<T>;
}

impl<T> StageExt<T> for bosonkernel::Result<T> {
    fn stage(self, stage: &'static str, default: ErrorKind) -> CliResult<T> {
        self.map_err(|e| {
            let kind = match &e {
                Error::Parse { .. } | Error::Data(_) | Error::Format(_) | Error::Io(_) => ErrorKind::Data,
                Error::NotPsd { .. } | Error::Numerical(_) | Error::Overflow(_) => ErrorKind::Numerical,
                _ => default,
            };
            CliError::new(kind, stage, e.to_string())
        })
    }
}

impl<T> StageExt<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str, default: ErrorKind) -> CliResult<T> {
        self.map_err(|e| CliError::new(default, stage, e.to_string()))
    }
}

impl<T> StageExt<T> for serde_json::Result<T> {
    fn stage(self, stage: &'static str, default: ErrorKind) -> CliResult<T> {
        self.map_err(|e| CliError::new(default, stage, e.to_string()))
    }
}
