use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("missing constant `{name}`: {hint}")]
    MissingConstant { name: &'static str, hint: &'static str },

    #[error("{method} diverged at iteration {iter}: objective {value} vs initial {initial}")]
    Diverged {
        method: &'static str,
        iter: usize,
        value: f64,
        initial: f64,
    },

    #[error("point is not stable: fixed-point residual {residual} exceeds {tol}")]
    NotStable { residual: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
