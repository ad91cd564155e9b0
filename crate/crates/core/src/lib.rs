//! Continuous-control policy search benchmark.
//!
//! The crate is generic over the floating-point type through [`Scalar`]; the
//! aliases at the root fix it to `f64`, which is what the harness uses.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algos;
pub mod checks;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mdp;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tasks;
pub mod wrappers;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use tasks::TaskKind;

/// Default precision of the benchmark.
pub type Real = f64;
pub type Matrix = linalg::Matrix<Real>;
pub type PhysicsParams = tasks::PhysicsParams<Real>;
pub type Trajectory = mdp::Trajectory<Real>;
pub type EnvSpec = mdp::EnvSpec<Real>;
