//! Closed-form diagonal Gaussian quantities.

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// `log N(action; mean, diag(exp(2 log_std)))`.
pub fn log_prob<T: Scalar>(mean: &[T], log_std: &[T], action: &[T]) -> Result<T> {
    if mean.len() != action.len() || log_std.len() != action.len() {
        return Err(Error::Dimension {
            context: "gaussian log_prob",
            expected: mean.len(),
            actual: action.len(),
        });
    }
    if !(all_finite(mean) && all_finite(log_std) && all_finite(action)) {
        return Err(Error::NonFinite("gaussian log_prob input"));
    }
    Ok(log_prob_unchecked(mean, log_std, action))
}

pub(crate) fn log_prob_unchecked<T: Scalar>(mean: &[T], log_std: &[T], action: &[T]) -> T {
    let half_log_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let mut lp = T::zero();
    for ((&m, &ls), &a) in mean.iter().zip(log_std).zip(action) {
        let z = (a - m) * (-ls).exp();
        lp -= T::lit(0.5) * z * z + ls + half_log_2pi;
    }
    lp
}

/// `KL(N(mean_p, sd_p) || N(mean_q, sd_q))` for diagonal Gaussians.
pub fn kl<T: Scalar>(mean_p: &[T], log_std_p: &[T], mean_q: &[T], log_std_q: &[T]) -> T {
    let half = T::lit(0.5);
    let mut d = T::zero();
    for i in 0..mean_p.len() {
        let var_p = (T::lit(2.0) * log_std_p[i]).exp();
        let var_q = (T::lit(2.0) * log_std_q[i]).exp();
        let diff = mean_p[i] - mean_q[i];
        d += log_std_q[i] - log_std_p[i] + (var_p + diff * diff) / (T::lit(2.0) * var_q) - half;
    }
    d
}

/// `mean + exp(log_std) * eps` with `eps ~ N(0, I)`.
pub fn sample<T: Scalar>(mean: &[T], log_std: &[T], rng: &mut SeededRng) -> Vec<T> {
    mean.iter()
        .zip(log_std)
        .map(|(&m, &ls)| m + ls.exp() * rng.normal::<T>())
        .collect()
}
