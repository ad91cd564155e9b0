//! Policy search algorithms.
//!
//! Batch methods (`reinforce`, `natural`, `rwr`, `reps`) act on a
//! [`BatchSample`]; `cem` and `cmaes` see the policy only as a flat parameter
//! vector and a return oracle; `ddpg` learns online from a replay pool.

pub mod baseline;
pub mod batch;
pub mod cem;
pub mod cmaes;
pub mod ddpg;
pub mod natural;
pub mod optim;
pub mod reinforce;
pub mod reps;
pub mod rwr;

pub use baseline::{baseline_features, LinearBaseline};
pub use batch::{collect_batch, trajectory_rng, BatchSample};
pub use cem::{Cem, CemConfig};
pub use cmaes::{CmaEs, CmaEsConfig};
pub use ddpg::{Ddpg, DdpgConfig, OuNoise, ReplayPool, Transition};
pub use natural::{natural_step, tnpg_step, trpo_step, NaturalStep, TrustRegionConfig};
pub use optim::Adam;
pub use reinforce::{reinforce_adam_step, reinforce_gradient, reinforce_step, StepRule};
pub use reps::{RepsConfig, RepsData, RepsDual};
pub use rwr::{rwr_update, rwr_weights, RwrConfig};

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::nn::{GaussianPolicy, SequenceData};
use crate::scalar::Scalar;

/// What happened during one policy update.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateReport<T> {
    /// Whether the parameters changed.
    pub accepted: bool,
    /// Mean KL from the old to the new policy over the batch.
    pub mean_kl: Option<T>,
    /// `0.5 * step^T F step` from the quadratic model.
    pub predicted_kl: Option<T>,
    pub backtracks: usize,
    pub note: Option<String>,
}

impl<T> UpdateReport<T> {
    pub fn skipped(note: impl Into<String>) -> Self {
        Self {
            accepted: false,
            mean_kl: None,
            predicted_kl: None,
            backtracks: 0,
            note: Some(note.into()),
        }
    }
}

/// Gradient ascent on `(1/M) sum_t w_t log pi(a_t | s_t)` for a fixed number of steps.
pub fn weighted_ml_fit<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    data: &SequenceData<T>,
    weights: &[T],
    steps: usize,
    learning_rate: T,
) -> Result<Vec<T>> {
    let inv_m = T::one() / T::lit(data.len() as f64);
    let mut p = params.to_vec();
    for _ in 0..steps {
        let (_, g) = policy.weighted_log_prob_grad(&p, data, weights)?;
        for (pi, gi) in p.iter_mut().zip(g) {
            *pi += learning_rate * inv_m * gi;
        }
        if !all_finite(&p) {
            return Err(Error::NonFinite("weighted maximum-likelihood fit"));
        }
    }
    Ok(p)
}

/// Rescales non-negative weights to mean one; `None` when they are all zero.
pub(crate) fn normalize_weights<T: Scalar>(weights: &mut [T]) -> Option<()> {
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) || !total.is_finite() {
        return None;
    }
    let k = T::lit(weights.len() as f64) / total;
    for w in weights.iter_mut() {
        *w *= k;
    }
    Some(())
}
