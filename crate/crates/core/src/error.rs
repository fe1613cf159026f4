use std::path::PathBuf;

use thiserror::Error;

/// Configuration problems, always naming the offending key.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    /// No input sequence keeps the predicted separation above the effective
    /// minimum distance.
    #[error("no feasible input sequence (best residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("input sequence has length {got}, horizon is {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("controller step {ctrl_dt} s is not a multiple of plant step {dt_sim} s")]
    Cadence { ctrl_dt: f64, dt_sim: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty interaction window (t0 = {t0}, T_end = {t_end})")]
    EmptyWindow { t0: f64, t_end: f64 },
    #[error("trace has no records")]
    EmptyTrace,
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace {path} line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}
