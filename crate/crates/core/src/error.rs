use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which free-boundary equation a root-finding failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    Buy,
    Sell,
}

impl std::fmt::Display for Curve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Curve::Buy => f.write_str("buy (f1)"),
            Curve::Sell => f.write_str("sell (f2)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters:\n{0}")]
    InvalidParams(ValidationReport),

    #[error("config: {0}")]
    Config(String),

    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfDomain { what: &'static str, value: f64, lo: f64, hi: f64 },

    #[error(
        "no sign change of the {curve} boundary equation ({side}) at t = {t} \
         inside ({lo}, {hi}); lambda = {lambda} is too large for the asymptotic regime"
    )]
    NoBracket { curve: Curve, side: &'static str, t: f64, lambda: f64, lo: f64, hi: f64 },

    #[error("root solver stalled after {iterations} iterations (|f| = {residual:e})")]
    RootNotConverged { iterations: usize, residual: f64 },

    #[error("boundary ordering violated at t = {t}: delta1 = {delta1}, delta2 = {delta2}")]
    BoundaryOrder { t: f64, delta1: f64, delta2: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(
        "explicit scheme is not monotone: dt = {dt:e}, dz = {dz:e}, worst node z = {z} \
         (diagonal weight {weight:e}); refine dz or use the penalty scheme"
    )]
    Cfl { dt: f64, dz: f64, z: f64, weight: f64 },

    #[error("penalty Newton iteration failed at t = {t} after {iterations} iterations (update {update:e})")]
    NewtonNonConvergence { t: f64, iterations: usize, update: f64 },

    #[error("grid too coarse for lambda = {lambda}: need nz >= {required_nz} (have {nz})")]
    GridPolicy { lambda: f64, nz: usize, required_nz: usize },

    #[error("invalid path configuration: {0}")]
    InvalidPathConfig(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for problems with the inputs, as opposed to numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::Config(_)
                | Error::OutOfDomain { .. }
                | Error::InvalidGrid(_)
                | Error::GridPolicy { .. }
                | Error::InvalidPathConfig(_)
        )
    }
}
