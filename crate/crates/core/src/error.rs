use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Validation failures (bad grids, bad parameters, mismatched inputs) are kept
/// apart from solver failures so that callers can map them onto distinct exit
/// codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field has {got} samples, grid expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("resampling point {0} lies outside the source domain")]
    OutsideDomain(f64),

    #[error("no bound state: lowest eigenvalue {0} is not below -tol")]
    NoBoundState(f64),
    #[error("spectrum below threshold: Riccati solution blew up at x = {location}")]
    SpectrumBelowThreshold { location: f64 },
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("Newton iteration diverged; residual history {history:?}")]
    Diverged { history: Vec<f64> },
    #[error("modulation solve failed: {0}")]
    Modulation(String),
    #[error("evolution blew up at t = {t}")]
    BlowUp { t: f64 },
    #[error("boundary contamination at t = {t}: |w| = {value:e} at the box edge")]
    BoundaryContamination { t: f64, value: f64 },

    #[error("run incomplete: {0}")]
    Incomplete(String),

    #[error("config: {0}")]
    Config(String),
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a solver.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::GridMismatch
                | Error::LengthMismatch { .. }
                | Error::NonFinite(_)
                | Error::InvalidParameter(_)
                | Error::OutsideDomain(_)
                | Error::Config(_)
                | Error::MissingFile(_)
                | Error::Json(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
