//! L1-L2-TV image reconstruction and optical-flow estimation on adaptively
//! refined quad-tree grids.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches the file
//! system, the clock, or the command line lives in the companion `aqtv` crate.
//!
//! The pieces, bottom-up:
//!
//! - [`mesh`]: 2:1 balanced quad-tree meshes, grid functions and inter-grid
//!   projections.
//! - [`sparse`] / [`linsolve`]: CSR operators and the linear solvers behind the
//!   Newton iteration.
//! - [`operators`]: non-uniform finite differences (regular and dangling-node
//!   stencils), gradient, divergence, weighted adjoints, `T_h`, `S_h`, `B_h`.
//! - [`model`]: Huber function, discrete primal/dual energies, optimality
//!   residual and dual projections.
//! - [`newton`]: the semi-smooth Newton iteration.
//! - [`estimator`]: local primal-dual gap indicator and marking strategies.
//! - [`tv_analysis`]: effect of one-step refinement on the discrete TV.
//! - [`metrics`]: PSNR, MSSIM, endpoint/angular errors, flow colouring.
//! - [`pipelines`]: adaptive/uniform denoising, warping optical flow, and the
//!   disk benchmark.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod estimator;
pub mod linsolve;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod newton;
pub mod operators;
pub mod pipelines;
pub mod raster;
pub mod sparse;
pub mod tv_analysis;

mod math;

pub use estimator::{IndicatorField, MarkingError};
pub use linsolve::{LinearSolveError, SolveMethod, SolveReport, SolverOptions};
pub use mesh::{Axis, CellId, Direction, Domain, GridFunction, MeshError, NodeClass, QuadMesh, Side};
pub use model::{ModelError, ModelParams, SolverState};
pub use newton::{NewtonError, NewtonReport};
pub use operators::{DataTerm, DiscreteOperators, OperatorError, Regularizer};
pub use raster::Raster;
pub use sparse::{DiagonalWeights, SparseOperator};
