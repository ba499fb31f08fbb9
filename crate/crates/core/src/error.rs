use std::path::PathBuf;

/// Errors raised anywhere in the simulator, estimator, controllers or IO layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular composition: x_O2 = {x_o2:e} is below the admissible floor")]
    SingularComposition { x_o2: f64 },

    #[error("singular matrix (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("step size underflow at t = {t:.6} s (h = {h:e} s)")]
    Stiffness { t: f64, h: f64 },

    #[error("steady-state solver did not converge (best residual {residual:e})")]
    NonConvergence { residual: f64 },

    #[error("identification failed: {0}")]
    Identification(String),

    #[error("estimator diverged: {0}")]
    EstimatorDivergence(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("at t = {t:.1} s: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at(self, t: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime {
                t,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by invalid user input rather than a failing run.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
