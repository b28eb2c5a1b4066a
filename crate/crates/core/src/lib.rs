//! Benchmark toolkit for NK fitness landscapes.
//!
//! The crate generates random NK instances, certifies their global optima
//! with branch and bound, and runs hBOA, UMDA and several GA variants (all
//! hybridized with a deterministic hill climber and restricted tournament
//! replacement) under bisection population sizing.
//!
//! Module map:
//!
//! * [`instance`] - instances, genomes, full and incremental evaluation.
//! * [`exact`] - branch-and-bound certification of the global optimum.
//! * [`local_search`] - steepest-ascent (DHC) and stochastic hill climbers.
//! * [`evolution`] - selection, variation, RTR, UMDA and the generation loop.
//! * [`hboa`] - Bayesian networks with decision trees.
//! * [`harness`] - bisection, sweeps, aggregation and ratio comparisons.

pub mod error;
pub mod evolution;
pub mod exact;
pub mod harness;
pub mod hboa;
pub mod instance;
pub mod io;
pub mod local_search;
pub mod rng;

pub use error::{Error, Result};
pub use instance::{Genome, NkInstance};

/// Absolute tolerance for comparisons between accumulated fitness sums.
pub const FITNESS_TOL: f64 = 1e-9;

/// Minimum gain accepted as an improvement by the hill climbers.
pub const IMPROVEMENT_EPS: f64 = 1e-12;
