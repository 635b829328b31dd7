use thiserror::Error;

/// Errors surfaced by the compilation pipeline. Variants map to distinct
/// failure stages so callers (CLI exit codes, HTTP statuses) can dispatch on
/// them without string matching.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("bind error: {0}")]
    Bind(String),
    #[error("rewriting error: {0}")]
    Rewriting(String),
    #[error("infeasible rewriting: {0}")]
    Infeasible(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(msg: impl std::fmt::Display) -> Error {
        Error::Parse(msg.to_string())
    }
    pub fn unsupported(msg: impl std::fmt::Display) -> Error {
        Error::Unsupported(msg.to_string())
    }
    pub fn bind(msg: impl std::fmt::Display) -> Error {
        Error::Bind(msg.to_string())
    }
    pub fn rewriting(msg: impl std::fmt::Display) -> Error {
        Error::Rewriting(msg.to_string())
    }
    pub fn infeasible(msg: impl std::fmt::Display) -> Error {
        Error::Infeasible(msg.to_string())
    }
    pub fn backend(msg: impl std::fmt::Display) -> Error {
        Error::Backend(msg.to_string())
    }
    pub fn invalid(msg: impl std::fmt::Display) -> Error {
        Error::Invalid(msg.to_string())
    }

    /// Stable machine-readable tag for the error stage.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Unsupported(_) => "unsupported",
            Error::Bind(_) => "bind",
            Error::Rewriting(_) => "rewriting",
            Error::Infeasible(_) => "infeasible",
            Error::Backend(_) => "backend",
            Error::Invalid(_) => "invalid",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
