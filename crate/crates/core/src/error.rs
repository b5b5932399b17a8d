use thiserror::Error;

/// Errors raised by the certification engine.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A power-tail density was evaluated at its singular point.
    #[error("density singularity: {0}")]
    Singularity(String),

    /// The requested (threat, family) or geometry combination is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Mixed-norm rejection sampling stalled.
    #[error(
        "sampler abort: mixed-norm direction acceptance rate {rate:.3e} after {proposals} proposals \
         (k = {k}, d = {dim}); this (k, d) is outside desk-scale sampling"
    )]
    SamplerAbort {
        k: f64,
        dim: usize,
        proposals: u64,
        rate: f64,
    },

    /// Failure talking to an external classifier.
    #[error("classifier transport error: {0}")]
    Transport(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
