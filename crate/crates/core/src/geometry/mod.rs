//! Profiles, densities and structured meshes of the oscillating domain and its limit.

mod density;
mod fingers;
mod mesh;
mod profile;

pub use density::DensityField;
pub use fingers::{FingerLevels, FingerStrips};
pub use mesh::{
    build_mesh_eps, build_mesh_eps_graded, build_mesh_eps_with, build_mesh_limit, EpsMeshStyle, LevelStrips, LEVEL_GROWTH, BuiltMesh, Layout, Location, Mesh, RegionTag, VertexTag,
};
pub use profile::{EtaProfile, Extrema, ProfileFamily};

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("point ({x1}, {x2}) lies above eta_+ = {eta_plus}")]
    OutsideDomain { x1: f64, x2: f64, eta_plus: f64 },
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("upper layer Omega+ is degenerate: {0}")]
    DegeneratePlusLayer(String),
    #[error("eps = {0} is not the reciprocal of a positive integer")]
    EpsNotReciprocal(f64),
    #[error("mesh invariant violated: {0}")]
    InvalidMesh(String),
}

/// Oscillation period `eps = 1/k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Eps {
    k: usize,
}

impl Eps {
    pub fn from_k(k: usize) -> Result<Self, GeometryError> {
        if k == 0 {
            return Err(GeometryError::EpsNotReciprocal(f64::INFINITY));
        }
        Ok(Eps { k })
    }

    /// Accepts `eps` within a relative `1e-9` of `1/k`.
    pub fn from_value(eps: f64) -> Result<Self, GeometryError> {
        if !(eps > 0.0) || !eps.is_finite() || eps > 1.0 + 1e-12 {
            return Err(GeometryError::EpsNotReciprocal(eps));
        }
        let k = (1.0 / eps).round();
        if ((1.0 / eps) - k).abs() > 1e-9 * k {
            return Err(GeometryError::EpsNotReciprocal(eps));
        }
        Ok(Eps { k: k as usize })
    }

    pub fn k(self) -> usize {
        self.k
    }

    pub fn value<T: Real>(self) -> T {
        T::one() / T::from_count(self.k)
    }

    /// `eps * [x1 / eps] + eps * y`.
    pub fn unfold_x1<T: Real>(self, x1: T, y: T) -> T {
        let k = T::from_count(self.k);
        let cell = (x1 * k).floor().max(T::zero()).min(k - T::one());
        (cell + y) / k
    }
}

impl std::fmt::Display for Eps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "1/{}", self.k)
    }
}
