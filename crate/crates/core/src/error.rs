use thiserror::Error;

/// Errors raised by the solver and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrrError {
    #[error("unknown profile `{0}` (expected one of: couette, bump, sine, vanishing)")]
    UnknownProfile(String),

    #[error("profile is not bilipschitz: U' ranges over [{min:.6}, {max:.6}], required within [0.5, 2]")]
    NotBilipschitz { min: f64, max: f64 },

    #[error("profile does not map the finite channel onto [0,1]: U(0) = {u0}, U(1) = {u1}")]
    ChannelEndpoints { u0: f64, u1: f64 },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative derivative sup-norm d[{index}] = {value}")]
    NegativeNorm { index: usize, value: f64 },

    #[error("index {index} out of range (table holds orders 0..={max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("vanishing order {order} needs at least {required} grid points, got {got}")]
    GridTooCoarse { order: usize, required: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("wavenumber k must be nonzero")]
    ZeroWavenumber,

    #[error("negative Sobolev index {0}; dual norms are computed by dedicated routines")]
    NegativeSobolevIndex(i32),

    #[error("operation requires a {expected} channel")]
    WrongChannel { expected: &'static str },

    #[error("operator mismatch: {0}")]
    OperatorMismatch(String),

    #[error("singular factorization at row {0}")]
    Singular(usize),

    #[error("iterative solve did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:.3e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("non-finite value in mode k = {k} at t = {t}")]
    NonFinite { k: f64, t: f64 },

    #[error("discretization failure: -<Lambda u, u> = {0:.3e} is negative")]
    NegativeDualNorm(f64),

    #[error("snapshot cadence too coarse: relative finite-difference error estimate {0:.3}")]
    CadenceTooCoarse(f64),

    #[error("fit requires positive values, found {value} at t = {t}")]
    NonPositive { t: f64, value: f64 },

    #[error("fit window [{a}, {b}] holds {count} points, need at least 2")]
    EmptyWindow { a: f64, b: f64, count: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, OrrError>;

impl From<std::io::Error> for OrrError {
    fn from(e: std::io::Error) -> Self {
        OrrError::Io(e.to_string())
    }
}
