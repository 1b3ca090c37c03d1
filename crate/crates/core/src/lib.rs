//! Probability content of polyhedra under the standard multivariate normal
//! distribution, computed with the holonomic gradient method (HGM).
//!
//! The pipeline is: a [`HalfspaceSystem`] describes `P = {x : a_j.x + b_j >= 0}`;
//! its [`FaceComplex`] indexes the state vector; the [`pfaffian`] module
//! assembles the linear connection acting on that vector; [`hgm`] integrates
//! it along a homotopy from a point with closed-form values.  [`oracles`]
//! holds the independent Monte Carlo and quadrature estimators used to check
//! the results.

// Dense kernels index several parallel arrays by the same loop variable.
#![allow(clippy::needless_range_loop)]

pub mod checks;
pub mod error;
pub mod families;
pub mod geometry;
pub mod hgm;
pub mod inclusion_exclusion;
pub mod linalg;
pub mod lp;
pub mod ode;
pub mod oracles;
pub mod pfaffian;

pub use error::{HgmError, Result};
pub use geometry::{FaceComplex, GeneralPositionReport, HalfspaceSystem, IndexSet};
pub use hgm::{probability, HgmResult, Method, Path, PathKind};
pub use ode::{Scheme, SolverConfig};
pub use oracles::McEstimate;
pub use pfaffian::{GVector, GramCache, PfaffianOperator, SparseMatrix};
