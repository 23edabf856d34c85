use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value{}: {what}", at_step(.step))]
    Numerical { step: Option<usize>, what: String },

    #[error("fixed-point iteration did not converge at step {step} after {iterations} iterations")]
    Convergence { step: usize, iterations: usize },

    #[error("reference solution cannot be evaluated at t = {t}")]
    Reference { t: f64 },

    #[error("replication {index} failed: {source}")]
    Replication {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

fn at_step(step: &Option<usize>) -> String {
    step.map(|s| format!(" at step {s}")).unwrap_or_default()
}
