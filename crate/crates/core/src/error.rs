use thiserror::Error;

/// Failures reported by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate parameters: {0}")]
    DegenerateParams(String),

    #[error("grid too small: field magnitude {edge:.3e} at the boundary exceeds {tol:.1e}")]
    GridTooSmall { edge: f64, tol: f64 },

    #[error("integrand has nonzero mean {mean:.3e}; antiderivative does not decay")]
    NonZeroMean { mean: f64 },

    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("integration step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("Newton iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("tracking lost at snapshot {index}")]
    TrackingLost { index: usize },

    #[error("no crossing found: {0}")]
    NoCrossing(String),

    #[error("no zero of the potential ahead of the trajectory")]
    NoZeroAhead,

    #[error("c = {0} is excluded: the reference operator degenerates at c = 1")]
    InvalidC(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
