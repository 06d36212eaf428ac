use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no sign change of theta before xi_max = {reached}")]
    SupportNotFound { reached: f64 },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("time step fell below dt_min at t = {time} (dt = {dt}): {reason}")]
    DtUnderflow { time: f64, dt: f64, reason: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("fewer than {needed} samples in window [{t_lo}, {t_hi}] (found {found})")]
    TooFewSamples { needed: usize, found: usize, t_lo: f64, t_hi: f64 },

    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse { .. } | Error::Io { .. } => 2,
            Error::Domain(_) | Error::TooFewSamples { .. } => 2,
            Error::SupportNotFound { .. } | Error::DtUnderflow { .. } | Error::State(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::SupportNotFound { .. } => "support_not_found",
            Error::Config { .. } => "config",
            Error::DtUnderflow { .. } => "dt_underflow",
            Error::State(_) => "state",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}
