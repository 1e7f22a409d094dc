//! Balanced and Chow-critical algebraic metrics on polarized toric manifolds.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom fix `f64` for everyday use. Torus GIT checks in
//! [`gitcheck`] run in exact integer arithmetic.

pub mod balance;
pub mod chow;
pub mod error;
pub mod extremal;
pub mod geometry;
pub mod gitcheck;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod scalar;
pub mod sections;
pub mod weights;

pub use error::{Error, Result};
pub use geometry::{
    build_quadrature, degree_volume, enumerate_sections, evaluate_sections, LatticePolytope,
    PolarizedModel, QuadratureDescriptor, QuadratureKind, QuadratureScheme, SectionSet, Spot,
    StockModel,
};
pub use gitcheck::{torus_stable, OrbitStatus, StabilityVerdict, WeightConfiguration};
pub use scalar::Scalar;
pub use weights::{decompose, SubtorusAction, WeightBlocks};

pub type Quadrature = geometry::QuadratureScheme<f64>;
pub type Metric = sections::AlgebraicMetric<f64>;
pub type Subgroup = chow::OneParamSubgroup<f64>;
pub type Index = weights::IndexVector<f64>;
pub type Solve = balance::SolveReport<f64>;
pub type Curvature = extremal::CurvatureField<f64>;
pub type Extremal = extremal::ExtremalData<f64>;

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
