use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transfer element denominator vanishes at s = {s}")]
    PoleHit { s: Complex64 },

    #[error("singular 2x2 block (|det| = {det:e})")]
    SingularBlock { det: f64 },

    #[error("frequency shift requires a delay-free element (delay = {delay} s)")]
    DelayedShift { delay: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("frequency {f_hz} Hz outside tabulated range [{min_hz}, {max_hz}] Hz")]
    OutOfRange { f_hz: f64, min_hz: f64, max_hz: f64 },

    #[error("admittance table: {0}")]
    Table(String),

    #[error("network validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("branch {branch} has a singular impedance block at {f_hz} Hz")]
    SingularBranch { branch: usize, f_hz: f64 },

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("at {f_hz} Hz: {source}")]
    AtFrequency {
        f_hz: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("crossover bisection on trace {trace} did not converge in [{f_lo_hz}, {f_hi_hz}] Hz")]
    BisectionFailed {
        trace: usize,
        f_lo_hz: f64,
        f_hi_hz: f64,
    },

    #[error("compensation infeasible after {iterations} iterations: trace {trace} short by {shortfall:e} S")]
    PlanInfeasible {
        trace: usize,
        iterations: usize,
        shortfall: f64,
    },

    #[error("encirclement count indeterminate: {0}")]
    Indeterminate(String),

    #[error("active damper calibration infeasible: {0}")]
    CalibrationInfeasible(String),

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(self, f_hz: f64) -> Self {
        match self {
            e @ Error::AtFrequency { .. } => e,
            e => Error::AtFrequency {
                f_hz,
                source: Box::new(e),
            },
        }
    }
}
