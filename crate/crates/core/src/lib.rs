//! Linear-quadratic static team problems driven by high-dimensional
//! isotropic log-concave noise.
//!
//! The crate builds ensembles of team problems whose observation and cost
//! matrices are `Z = W Rᵀ` for a fixed `W` and a Haar-random orthonormal
//! frame `R`, solves for the best linear team policy in closed form,
//! approximates the unrestricted optimum by person-by-person iteration, and
//! evaluates the explicit error bounds and convergence diagnostics that tie
//! the two together as the noise dimension grows.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod noise;
pub mod pbp;
pub mod rng;
pub mod stats;
pub mod stiefel;
pub mod svg;
pub mod team;

pub use bounds::{BoundConstants, FundamentalBounds, GapBoundRecord};
pub use diagnostics::{DensityReport, GapSweepRow};
pub use error::{Error, Result};
pub use noise::{NoiseFamily, NoiseModel, TailEnvelope};
pub use pbp::{CellForm, PbpConfig, PbpSolution, TabulatedPolicy};
pub use stats::EstimateWithError;
pub use stiefel::OrthonormalMatrix;
pub use team::{LinearPolicy, Policy, ProblemInstance, TeamSpec, ZeroPolicy};
