//! Spectral mixed interior-penalty DG solver for the three-dimensional
//! Lame/Stokes system on anisotropic geometric hexahedral meshes.
//!
//! The crate builds sigma-geometric patch meshes (edge, corner,
//! corner-edge, Fichera), assembles the mixed DG system with the
//! anisotropy-aware penalty `c = gamma h^-1 k^2`, solves the augmented
//! saddle-point formulation with a zero-mean pressure multiplier, computes
//! the discrete inf-sup constants gamma_B and gamma_a from singular value
//! decompositions of norm-normalized matrices, and runs the exponential
//! convergence studies on manufactured singular solutions.

// Force linking of the system BLAS/LAPACK provider.
extern crate openblas_src as _;

pub mod assembly;
pub mod cli;
pub mod error;
pub mod exec;
pub mod fem;
pub mod infsup;
pub mod mesh;
#[cfg(feature = "test-oracles")]
pub mod oracles;
pub mod problems;
pub mod report;
pub mod solver;
pub mod sparse;
pub mod spaces;

pub use error::{Error, Result};
