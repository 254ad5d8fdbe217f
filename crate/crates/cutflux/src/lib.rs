//! Unfitted finite elements for a two-phase elliptic interface problem.
//!
//! The crate solves `-div(K grad u) = f` with piecewise-constant `K` on a
//! background triangulation that does not fit the interface, using a
//! stabilized Nitsche coupling (CutFEM with ghost penalty). From the primal
//! solution it computes local edge multipliers by independent node-patch
//! solves, reconstructs locally conservative fluxes — per-subdomain
//! Raviart-Thomas fields and a globally H(div)-conforming immersed
//! Raviart-Thomas field — and evaluates a posteriori error estimators with
//! effectivity reports.
//!
//! Start from the `examples/` directory: each example runs one capability end
//! to end. The `cutflux` binary drives batch experiments (`run`, `converge`,
//! `sweep`) from plain-text config files.

pub mod cutfem;
pub mod cutgeom;
pub mod error;
pub mod flux_rt;
mod geo;
pub mod linalg;
pub mod mesh;
pub mod multipliers;
pub mod quadrature;

pub use cutfem::{solve_primal, PrimalField, PrimalSolution, ProblemData};
pub use multipliers::{build_multiplier, BrokenField, MultiplierField};
pub use cutgeom::{
    clip_triangle, interface_weights, CutCell, CutTopology, InterfacePolyline, InterfaceWeights,
    Phase,
};
pub use error::{Error, Result};
pub use mesh::{Mesh, NodePatch, Rect};
pub use quadrature::QuadratureRule;
