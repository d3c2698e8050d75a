use std::fmt;

use qhist_core::Error as CoreError;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CAP: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Malformed or inconsistent config.
    Validation(String),
    /// Wall-clock or tensor-size cap exceeded.
    Cap(String),
    /// Numerical failure during a run.
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Cap(_) => EXIT_CAP,
            CliError::Runtime(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// Tags a core error with where it came from.
    pub fn context(what: &str) -> impl Fn(CoreError) -> CliError + '_ {
        move |e| {
            let mut out = CliError::from(e);
            match &mut out {
                CliError::Validation(m) | CliError::Cap(m) | CliError::Runtime(m) | CliError::Io(m) => {
                    *m = format!("{what}: {m}")
                }
            }
            out
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid config: {m}"),
            CliError::Cap(m) => write!(f, "cap exceeded: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::SizeCap { .. } => CliError::Cap(e.to_string()),
            CoreError::Residual { .. } | CoreError::ZeroOverlap(_) | CoreError::NegativeProbability(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
