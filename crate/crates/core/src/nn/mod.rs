//! Function approximators, the policy families and their derivatives.

pub mod autodiff;
pub mod checkpoint;
pub mod deterministic;
pub mod gaussian;
pub mod lstm;
pub mod mlp;
pub mod params;
pub mod policy;

pub use autodiff::{grad_scalar, Tape, Var};
pub use deterministic::{DeterministicPolicy, QFunction};
pub use mlp::{Activation, Mlp};
pub use params::ParamLayout;
pub use policy::{GaussianPolicy, PolicyArch, PolicyForward, SequenceData};
