//! Mixed finite element solver for the stationary ferrohydrodynamics model in
//! which the magnetization stays parallel to the magnetic field.
//!
//! The model decouples into a nonlinear scalar-potential problem for `phi`
//! (with `H = grad phi`), an incompressible Navier–Stokes problem for the
//! velocity and a modified pressure, and a chain of pointwise recoveries for
//! the magnetization `M`, the Kelvin-force potential `psi` and the physical
//! pressure `p`. Everything is discretized on uniform triangulations of the
//! unit square:
//!
//! * [`mesh`] builds the triangulations and their oriented edge topology,
//! * [`refelem`] tabulates reference bases (P0, P1, P2, CR, NE0, NE1) and quadrature,
//! * [`fespace`] enumerates global dofs, interpolants and the discrete gradient,
//! * [`material`] evaluates the Langevin-law coefficients `alpha` and `beta`,
//! * [`assembly`] builds every bilinear, trilinear and source term,
//! * [`linalg`] wraps the sparse direct solvers,
//! * [`driver`] runs the decoupled Picard/Oseen solve and field recovery,
//! * [`verify`] holds manufactured solutions, error norms, convergence studies
//!   and the property battery.

// Index loops mirror the local-matrix notation; `!(x > 0.0)` deliberately
// rejects NaN; quadrature constants keep their published digits.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod assembly;
pub mod driver;
pub mod error;
pub mod fespace;
pub mod linalg;
pub mod material;
pub mod mesh;
pub mod refelem;
pub mod verify;

pub use assembly::{AssemblyOptions, SaddleSystem, SparseMatrix};
pub use driver::{solve_fhd, ElementPair, FhdConfig, FhdSolution};
pub use error::FhdError;
pub use fespace::{FEField, FESpace};
pub use linalg::{SolveReport, SolveStatus};
pub use material::MaterialParams;
pub use mesh::Mesh2D;
pub use refelem::{ElementFamily, QuadratureRule};
pub use verify::{ManufacturedCase, StudyReport};

/// A point in the plane.
pub type Point = [f64; 2];
