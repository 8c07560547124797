//! Epsilon sweeps: solve the oscillating problems and the limit problem, measure
//! weak convergence, and write reports.

mod bank;
mod config;
mod metrics;
mod sweep;

use thiserror::Error;

use crate::fem::FemError;
use crate::geometry::GeometryError;
use crate::limit::LimitError;
use crate::operator::OperatorError;
use crate::unfolding::UnfoldError;

pub use bank::{TestFunction, TestFunctionBank, MAX_BANK};
pub use config::{
    AlphaConfig, AlphaKind, ConfigError, DensityConfig, MeshConfig, OperatorConfig, ProfileConfig, RunConfig,
    SourceConfig, SourceKind, SweepConfig, Tolerances, UnfoldConfig,
};
pub use metrics::{weak_error_flux, weak_error_u, LimitData};
pub use sweep::{
    hypothesis_box, limit_density, limit_rows, run_sweep, unfold_grid, solve_eps_from_config, solve_limit_from_config, BoundsRow, Check, LimitDiagnostics,
    SweepReport, SweepRow, CSV_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("operator rejected: {0}")]
    Hypothesis(OperatorError),
    #[error("at eps = {eps}: {source}")]
    Solve { eps: String, source: FemError },
    #[error("limit problem: {0}")]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Unfold(#[from] UnfoldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("incompatible geometry: {0}")]
    IncompatibleGeometry(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
