//! Reward-weighted regression.

use crate::error::{Error, Result};
use crate::nn::{GaussianPolicy, SequenceData};
use crate::scalar::Scalar;

use super::batch::BatchSample;
use super::{normalize_weights, weighted_ml_fit, UpdateReport};

#[derive(Clone, Debug, PartialEq)]
pub struct RwrConfig<T> {
    pub inner_steps: usize,
    pub inner_learning_rate: T,
}

impl<T: Scalar> Default for RwrConfig<T> {
    fn default() -> Self {
        Self {
            inner_steps: 10,
            inner_learning_rate: T::lit(0.05),
        }
    }
}

/// `rho(z) = z - min z` over the batch.
pub fn rwr_weights<T: Scalar>(advantages: &[T]) -> Vec<T> {
    let min = advantages.iter().copied().fold(T::infinity(), T::min);
    advantages.iter().map(|&a| a - min).collect()
}

/// `(1/M) sum_t w_t log pi(a_t | s_t)` and its gradient.
pub fn rwr_objective<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    data: &SequenceData<T>,
    weights: &[T],
) -> Result<(T, Vec<T>)> {
    let (v, mut g) = policy.weighted_log_prob_grad(params, data, weights)?;
    let inv_m = T::one() / T::lit(data.len() as f64);
    g.iter_mut().for_each(|x| *x *= inv_m);
    Ok((v * inv_m, g))
}

pub fn rwr_update<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    batch: &BatchSample<T>,
    cfg: &RwrConfig<T>,
) -> Result<(Vec<T>, UpdateReport<T>)> {
    if batch.is_empty() {
        return Err(Error::Empty("RWR batch"));
    }
    let mut w = rwr_weights(&batch.advantages);
    if normalize_weights(&mut w).is_none() {
        return Ok((params.to_vec(), UpdateReport::skipped("all RWR weights are zero")));
    }
    let new = weighted_ml_fit(
        policy,
        params,
        &batch.data,
        &w,
        cfg.inner_steps,
        cfg.inner_learning_rate,
    )?;
    Ok((
        new,
        UpdateReport {
            accepted: true,
            mean_kl: None,
            predicted_kl: None,
            backtracks: 0,
            note: None,
        },
    ))
}
