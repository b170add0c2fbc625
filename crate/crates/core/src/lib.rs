//! P1 finite elements for the Poisson problem on the unit square with weakly
//! imposed Dirichlet data.
//!
//! Two discretizations are provided: symmetric Nitsche ([`nitsche`]) and a
//! stabilized Lagrange multiplier method with per-facet constant multipliers
//! ([`lagrange`]). From either solution the boundary normal flux can be
//! recovered ([`flux`]) and compared against a manufactured solution
//! ([`problem`], [`analysis`]). The [`study`] module drives whole
//! refinement studies and is what the `fluxfem` binary wraps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fem;
pub mod flux;
pub mod lagrange;
pub mod linsolve;
pub mod mesh;
pub mod nitsche;
pub mod problem;
pub mod sparse;
pub mod study;

pub use error::{FemError, Result};
pub use fem::{P1Space, QuadratureConfig, QuadratureRule, TraceDg0Space};
pub use flux::BoundaryFluxField;
pub use lagrange::{SaddleConfig, SaddleSystem, StabilizationScaling};
pub use linsolve::{Inertia, Solution};
pub use mesh::{BoundaryFacet, Mesh, OffsetContour, Side};
pub use nitsche::{LinearSystem, NitscheConfig, PenaltyScale};
pub use problem::ManufacturedProblem;
pub use sparse::CsrMatrix;

/// 2D point type used throughout.
pub type Point = nalgebra::Point2<f64>;
/// 2D vector type used throughout.
pub type Vector = nalgebra::Vector2<f64>;
