//! Relative entropy policy search.
//!
//! The dual `g(eta, nu) = eta * delta + eta * log mean_i exp(delta_i(nu) / eta)`
//! with `delta_i(nu) = r_i + nu . (phi(s'_i) - phi(s_i))` is minimised over
//! `(log eta, nu)`; the policy is then refit by weighted maximum likelihood.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, norm, Matrix};
use crate::nn::GaussianPolicy;
use crate::scalar::Scalar;

use super::batch::BatchSample;
use super::{normalize_weights, weighted_ml_fit, UpdateReport};

/// `phi(s) = concat(s, s*s, 1)`.
pub fn reps_features<T: Scalar>(obs: &[T]) -> Vec<T> {
    let mut f = Vec::with_capacity(2 * obs.len() + 1);
    f.extend_from_slice(obs);
    f.extend(obs.iter().map(|&x| x * x));
    f.push(T::one());
    f
}

/// Rewards and feature differences `phi(s') - phi(s)` of each sample.
#[derive(Clone, Debug)]
pub struct RepsData<T> {
    pub rewards: Vec<T>,
    pub feature_diff: Matrix<T>,
}

impl<T: Scalar> RepsData<T> {
    pub fn new(rewards: Vec<T>, feature_diff: Matrix<T>) -> Result<Self> {
        check_dim("REPS samples", rewards.len(), feature_diff.rows())?;
        if rewards.is_empty() {
            return Err(Error::Empty("REPS dataset"));
        }
        Ok(Self { rewards, feature_diff })
    }

    pub fn from_batch(batch: &BatchSample<T>) -> Result<Self> {
        let m = batch.len();
        let k = 2 * batch.data.observations.cols() + 1;
        let mut diff = Matrix::zeros(m, k);
        for i in 0..m {
            let a = reps_features(batch.data.observations.row(i));
            let b = reps_features(&batch.next_observations[i]);
            for ((d, x), y) in diff.row_mut(i).iter_mut().zip(&a).zip(&b) {
                *d = *y - *x;
            }
        }
        Self::new(batch.rewards.clone(), diff)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_diff.cols()
    }

    /// Sample Bellman errors `delta_i(nu)`.
    pub fn bellman_errors(&self, nu: &[T]) -> Result<Vec<T>> {
        check_dim("REPS nu", self.feature_dim(), nu.len())?;
        let mut d = self.feature_diff.mat_vec(nu);
        for (di, &r) in d.iter_mut().zip(&self.rewards) {
            *di += r;
        }
        Ok(d)
    }
}

/// Dual variables.
#[derive(Clone, Debug, PartialEq)]
pub struct RepsDual<T> {
    pub eta: T,
    pub nu: Vec<T>,
}

/// Value of the dual and its partial derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct DualEvaluation<T> {
    pub value: T,
    pub d_eta: T,
    pub d_nu: Vec<T>,
}

/// Unnormalised weights `exp((delta_i - max) / eta)` and `max`.
fn shifted_exp<T: Scalar>(delta: &[T], eta: T) -> (Vec<T>, T) {
    let max = delta.iter().copied().fold(T::neg_infinity(), T::max);
    (delta.iter().map(|&d| ((d - max) / eta).exp()).collect(), max)
}

fn check_eta<T: Scalar>(eta: T) -> Result<()> {
    if eta > T::zero() && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("REPS temperature must be positive, got {eta}")))
    }
}

pub fn reps_dual_value<T: Scalar>(eta: T, nu: &[T], data: &RepsData<T>, delta_kl: T) -> Result<T> {
    Ok(reps_dual(eta, nu, data, delta_kl)?.value)
}

/// Dual value with analytic derivatives, using max subtraction throughout.
pub fn reps_dual<T: Scalar>(eta: T, nu: &[T], data: &RepsData<T>, delta_kl: T) -> Result<DualEvaluation<T>> {
    check_eta(eta)?;
    let delta = data.bellman_errors(nu)?;
    if !all_finite(&delta) {
        return Err(Error::NonFinite("REPS Bellman errors"));
    }
    let (w, max) = shifted_exp(&delta, eta);
    let sum_w: T = w.iter().copied().sum();
    let m = T::lit(data.len() as f64);
    // log mean exp(delta / eta)
    let lme = max / eta + (sum_w / m).ln();
    let value = eta * delta_kl + eta * lme;
    let weighted_delta: T = w.iter().zip(&delta).map(|(&wi, &di)| wi * di).sum();
    let d_eta = delta_kl + lme - weighted_delta / (eta * sum_w);
    let mut d_nu = vec![T::zero(); data.feature_dim()];
    for (i, &wi) in w.iter().enumerate() {
        for (g, &f) in d_nu.iter_mut().zip(data.feature_diff.row(i)) {
            *g += wi * f;
        }
    }
    d_nu.iter_mut().for_each(|g| *g /= sum_w);
    Ok(DualEvaluation { value, d_eta, d_nu })
}

/// Sample weights `exp(delta_i / eta)` rescaled to mean one.
pub fn reps_weights<T: Scalar>(dual: &RepsDual<T>, data: &RepsData<T>) -> Result<Vec<T>> {
    check_eta(dual.eta)?;
    let (mut w, _) = shifted_exp(&data.bellman_errors(&dual.nu)?, dual.eta);
    normalize_weights(&mut w).ok_or(Error::Numerical("REPS weights vanished".into()))?;
    Ok(w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepsConfig<T> {
    pub delta_kl: T,
    pub dual_tolerance: T,
    pub dual_max_iters: usize,
    pub inner_steps: usize,
    pub inner_learning_rate: T,
}

impl<T: Scalar> RepsConfig<T> {
    pub fn new(delta_kl: T) -> Self {
        Self {
            delta_kl,
            dual_tolerance: T::lit(1e-5),
            dual_max_iters: 500,
            inner_steps: 10,
            inner_learning_rate: T::lit(0.05),
        }
    }
}

/// Result of the dual minimisation.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution<T> {
    pub dual: RepsDual<T>,
    pub value: T,
    pub gradient_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient descent with backtracking on `(log eta, nu)` from `eta = 1, nu = 0`.
pub fn minimize_dual<T: Scalar>(data: &RepsData<T>, cfg: &RepsConfig<T>) -> Result<DualSolution<T>> {
    if !(cfg.delta_kl > T::zero()) {
        return Err(Error::Config("REPS delta_kl must be positive".into()));
    }
    let k = data.feature_dim();
    let mut x = vec![T::zero(); k + 1];
    let eval = |x: &[T]| -> Result<(T, Vec<T>)> {
        let eta = x[0].exp();
        let e = reps_dual(eta, &x[1..], data, cfg.delta_kl)?;
        let mut g = Vec::with_capacity(k + 1);
        g.push(e.d_eta * eta);
        g.extend(e.d_nu);
        Ok((e.value, g))
    };
    let (mut f, mut g) = eval(&x)?;
    let mut step = T::one();
    let mut iterations = 0;
    let c = T::lit(1e-4);
    let half = T::lit(0.5);
    while iterations < cfg.dual_max_iters && norm(&g) > cfg.dual_tolerance {
        iterations += 1;
        let gg: T = g.iter().map(|&v| v * v).sum();
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<T> = x.iter().zip(&g).map(|(&xi, &gi)| xi - step * gi).collect();
            // Keep eta inside a range where exp stays finite.
            if cand[0].abs() < T::lit(50.0) {
                if let Ok((fc, gc)) = eval(&cand) {
                    if fc.is_finite() && fc <= f - c * step * gg {
                        x = cand;
                        f = fc;
                        g = gc;
                        accepted = true;
                        break;
                    }
                }
            }
            step *= half;
        }
        if !accepted {
            break;
        }
        step *= T::lit(2.0);
    }
    let gradient_norm = norm(&g);
    Ok(DualSolution {
        dual: RepsDual {
            eta: x[0].exp(),
            nu: x[1..].to_vec(),
        },
        value: f,
        gradient_norm,
        iterations,
        converged: gradient_norm <= cfg.dual_tolerance,
    })
}

/// Solves the dual, then fits the policy to the exponentially weighted samples.
pub fn reps_update<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    batch: &BatchSample<T>,
    cfg: &RepsConfig<T>,
) -> Result<(Vec<T>, UpdateReport<T>, DualSolution<T>)> {
    let data = RepsData::from_batch(batch)?;
    let sol = minimize_dual(&data, cfg)?;
    let w = reps_weights(&sol.dual, &data)?;
    let new = weighted_ml_fit(
        policy,
        params,
        &batch.data,
        &w,
        cfg.inner_steps,
        cfg.inner_learning_rate,
    )?;
    let note = (!sol.converged).then(|| {
        format!(
            "dual not converged after {} iterations (|grad| = {})",
            sol.iterations, sol.gradient_norm
        )
    });
    Ok((
        new,
        UpdateReport {
            accepted: true,
            mean_kl: None,
            predicted_kl: None,
            backtracks: 0,
            note,
        },
        sol,
    ))
}
