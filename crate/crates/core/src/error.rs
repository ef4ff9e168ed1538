use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular coupling denominator for resonator {resonator}")]
    Singularity { resonator: usize },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("drift matrix is {verdict} (spectral abscissa {abscissa:.6e}); no steady state")]
    Unstable {
        verdict: &'static str,
        abscissa: f64,
    },

    #[error("numerical failure: {message} (condition estimate {condition:.3e})")]
    Numerical { message: String, condition: f64 },

    #[error("propagation diverged at step {step}")]
    Divergence { step: usize },

    #[error("non-physical covariance: minimum symplectic eigenvalue {nu:.6e} is below 1/2")]
    Unphysical { nu: f64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("no feasible (stable) point in the search grid")]
    NoFeasiblePoint,

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
