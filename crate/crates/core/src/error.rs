use thiserror::Error;

use crate::grid_oracle::GridSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value of {what} at t = {t}")]
    Domain { what: String, t: f64 },

    #[error("H_pp is not positive definite at t = {t}")]
    NotConvex { t: f64 },

    #[error("initial datum is not smooth: {0}")]
    NonSmooth(String),

    #[error("integration failed after t = {t_last}: {reason}")]
    Integration { t_last: f64, reason: String },

    #[error("Newton iteration failed: {0}")]
    Newton(String),

    #[error("no characteristic reaches the query point: {0}")]
    NoMinimizer(String),

    #[error("gradients are geometrically dependent (smallest singular value {margin:e})")]
    GeometricDependence { margin: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not a minimax element: {0}")]
    NotMinimax(String),

    #[error("singular point search exhausted after depth {depth} ({points} points examined): {detail}")]
    Exhausted {
        depth: usize,
        points: usize,
        detail: String,
    },

    #[error("CFL condition violated at t = {t} (number {cfl:.3})")]
    Cfl {
        t: f64,
        cfl: f64,
        partial: Box<GridSolution>,
    },

    #[error("csv export: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: impl Into<String>, t: f64) -> Self {
        Error::Domain {
            what: what.into(),
            t,
        }
    }

    /// True for failures of the numerics (integration, Newton, empty search,
    /// CFL) as opposed to bad input or failed hypotheses.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::Integration { .. }
                | Error::Newton(_)
                | Error::NoMinimizer(_)
                | Error::Cfl { .. }
                | Error::Exhausted { .. }
        )
    }
}
