use thiserror::Error;

/// Errors raised by the solvers and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("newton iteration did not converge at zeta = {zeta} (residual {residual:.3e}, continuation step {step:.3e})")]
    NonConvergence { zeta: f64, residual: f64, step: f64 },

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate endpoint slope: -u_x(pi) = {0:.3e}")]
    DegenerateEndpoint(f64),

    #[error("degenerate increment: a(pi) - a(0) = {0:.3e}")]
    DegenerateIncrement(f64),

    #[error("degenerate pushforward: S = {0:.3e} at an interior node")]
    DegeneratePushforward(f64),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("root bracket failed: g({lo:.6e}) = {g_lo:.3e}, g({hi:.6e}) = {g_hi:.3e}")]
    BracketFailure { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
