use thiserror::Error;

/// Errors raised by the reconstruction library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input (shapes, orderings, parameter ranges).
    #[error("invalid input: {0}")]
    Input(String),

    /// A function was evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An interpolant was queried outside its knot range.
    #[error("extrapolation refused: x = {x} outside [{lo}, {hi}]")]
    Extrapolation { x: f64, lo: f64, hi: f64 },

    /// Least-squares bump fitting could not proceed.
    #[error("fit failed: {0}")]
    Fit(String),

    /// The time step violates the CFL condition.
    #[error("CFL violation at t = {time}: wave speed {wave_speed} m/s gives CFL number {cfl}")]
    Stability { time: f64, wave_speed: f64, cfl: f64 },

    /// The flow state became non-finite.
    #[error("solver diverged at t = {time}")]
    Divergence { time: f64 },

    /// Noise calibration is ill-defined for the given data.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// A measurement file could not be parsed.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// A matrix factorization or similar numerical routine failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
