use thiserror::Error;

/// Errors produced anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("invalid plan: {0}")]
    Plan(String),

    #[error("planning error: {0}")]
    Planning(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("plan space too large: {tables} tables would generate {plans} plans")]
    TooManyPlans { tables: usize, plans: u128 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("work limit of {limit} tuples exceeded")]
    WorkLimitExceeded { limit: u64 },

    #[error("training error: {0}")]
    Training(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("answer mismatch: {0}")]
    Mismatch(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Wraps `self` with the line number of the query that caused it.
    pub fn at_line(self, line: usize) -> Self {
        Error::AtLine {
            line,
            source: Box::new(self),
        }
    }

    /// The innermost error, with line context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLine { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code: 1 for bad invocations, 3 for violated internal
    /// invariants, 2 for everything data-related.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config { .. } | Error::Argument(_) => 1,
            Error::Mismatch(_) | Error::Invariant(_) | Error::WorkLimitExceeded { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
