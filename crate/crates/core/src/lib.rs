//! Energy-stable parametric finite element solver for curvature-dependent
//! geometric gradient flows (mean curvature, Gauss curvature, Willmore and
//! general `f(H)` flows) of closed triangulated surfaces.
//!
//! The surface is a [`SurfaceMesh`]; each time step solves the implicit
//! scheme for new vertex positions, normal velocity, tangential multipliers
//! and mean curvature with Newton's method. The discrete energy
//! `sum_k m_k f(H_k)` never increases, whatever the step size.

pub mod density;
pub mod diagnostics;
pub mod error;
pub mod mesh;
pub mod ops;
pub mod solver;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

pub use density::EnergyDensity;
pub use error::{Error, Result};
pub use mesh::{MeshReport, SurfaceMesh};
pub use ops::{FaceFrame, FaceMatrixField, VertexScalarField, VertexVectorField};
pub use solver::{FlowState, StepConfig, StepStats};
