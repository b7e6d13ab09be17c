//! Penalized stochastic learning for generalized Nash equilibrium problems
//! with shared affine constraints over networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: topology, quadratic games, sampled gradients;
//! * [`penalty`]: shared constraints and the penalty reformulation;
//! * [`strategies`]: the stochastic-gradient, adapt-then-penalize and
//!   penalize-then-adapt recursions;
//! * [`baselines`]: Arrow-Hurwicz and iterative Tikhonov primal-dual methods;
//! * [`equilibrium`]: equilibrium and fixed-point solvers, noise constants
//!   and step-size bounds;
//! * [`cournot`]: the network Cournot competition builder;
//! * [`harness`]: Monte-Carlo experiments, sweeps and their persistence.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cournot;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod penalty;
pub mod rng;
pub mod schema;
pub mod strategies;

pub use error::{GnepError, Result};
pub use model::{ActionProfile, NoiseModel, QuadraticGame, Topology};
pub use penalty::{ConstraintSet, PenaltyConfig};
pub use strategies::{StepSizes, StrategyKind};
