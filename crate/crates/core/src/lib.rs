//! Numerical homogenization of a monotone elliptic problem on locally periodic
//! oscillating domains.

pub mod fem;
pub mod geometry;
pub mod harness;
pub mod limit;
pub mod numeric;
pub mod operator;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod unfolding;
pub mod sparse;

pub use scalar::{Point, Real};

/// Double-precision instantiations.
pub mod f64 {
    pub type Mesh = crate::geometry::Mesh<f64>;
    pub type EtaProfile = crate::geometry::EtaProfile<f64>;
    pub type DensityField = crate::geometry::DensityField<f64>;
    pub type OperatorSpec = crate::operator::OperatorSpec<f64>;
    pub type Field = crate::fem::Field<f64>;
    pub type LimitSolution = crate::limit::LimitSolution<f64>;
    pub type UnfoldGrid = crate::unfolding::UnfoldGrid<f64>;
}

/// Single-precision instantiations.
pub mod f32 {
    pub type Mesh = crate::geometry::Mesh<f32>;
    pub type EtaProfile = crate::geometry::EtaProfile<f32>;
    pub type DensityField = crate::geometry::DensityField<f32>;
    pub type OperatorSpec = crate::operator::OperatorSpec<f32>;
    pub type Field = crate::fem::Field<f32>;
    pub type LimitSolution = crate::limit::LimitSolution<f32>;
    pub type UnfoldGrid = crate::unfolding::UnfoldGrid<f32>;
}
