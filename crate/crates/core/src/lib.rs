//! Joint blind deconvolution and blind demixing.
//!
//! Recovers `r` signal pairs `(h_i, x_i)` from one observation
//! `y = sum_i diag(B_i h_i) A_i x_i` by lifting each pair to the rank-one
//! matrix `X_i = h_i x_i^*` and minimizing `sum_i |Z_i|_*` subject to the
//! linear measurements (or to a noise ball). The crate also computes the
//! incoherence quantities and dual-certificate constructions that govern
//! exact recovery, and drives Monte-Carlo phase-transition experiments.
//!
//! Modules, bottom up:
//! - [`ensemble`]: problem instances and the circular-convolution form.
//! - [`lifting`]: lifted operators `A_i`, their adjoints and Grams.
//! - [`incoherence`]: `mu_max`, `mu_h`, partitions, tangent spaces, norms.
//! - [`solver`]: ADMM with singular value thresholding, rank-one extraction.
//! - [`certificate`]: golfing-scheme dual certificate.
//! - [`harness`]: experiment grids, CSV and SVG output.
//! - [`cli`]: the `blind-demix` command line.

pub mod certificate;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod incoherence;
pub mod lifting;
pub mod linalg;
pub mod rng;
pub mod solver;
pub mod transforms;

pub use ensemble::{synthesize, AKind, BKind, Ensemble, EnsembleSpec, MatrixKind, NoiseSpec, UserSpec};
pub use error::{Error, Result};
pub use lifting::{LiftedBlocks, LiftedOperator};
pub use solver::{solve, SolverConfig, SolverDomain, SolverMode, SolverReport};
