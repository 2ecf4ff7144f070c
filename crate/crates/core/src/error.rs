use thiserror::Error;

/// Errors produced by schedule evaluation, solvers and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{family} is undefined at t = {t}")]
    Domain { family: &'static str, t: f64 },

    #[error("{family} SNR is unbounded at t = {endpoint}")]
    Unbounded { family: &'static str, endpoint: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not reach tolerance {tol:e} (estimated error {estimate:e})")]
    Quadrature { tol: f64, estimate: f64 },

    #[error("degenerate density: kernel noise and component variance are both zero")]
    DegenerateDensity,

    #[error("not supported: {0}")]
    Unsupported(String),
}

impl Error {
    /// Numerical failures (as opposed to bad configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. } | Error::Quadrature { .. } | Error::DegenerateDensity
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
