//! Truncated natural policy gradient and trust region policy optimization.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, conjugate_gradient, dot};
use crate::nn::GaussianPolicy;
use crate::scalar::Scalar;

use super::batch::BatchSample;
use super::reinforce::reinforce_gradient;
use super::UpdateReport;

#[derive(Clone, Debug, PartialEq)]
pub struct TrustRegionConfig<T> {
    pub delta_kl: T,
    pub cg_iters: usize,
    pub backtrack_ratio: T,
    pub max_backtracks: usize,
    /// Added to the Fisher-vector product as `damping * v`.
    pub damping: T,
}

impl<T: Scalar> TrustRegionConfig<T> {
    pub fn new(delta_kl: T) -> Self {
        Self {
            delta_kl,
            cg_iters: 10,
            backtrack_ratio: T::lit(0.8),
            max_backtracks: 15,
            damping: T::lit(0.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_kl > T::zero()) || !self.delta_kl.is_finite() {
            return Err(Error::Config(format!(
                "delta_kl must be positive, got {}",
                self.delta_kl
            )));
        }
        if !(self.backtrack_ratio > T::zero() && self.backtrack_ratio < T::one()) {
            return Err(Error::Config("backtrack_ratio must lie in (0, 1)".into()));
        }
        if self.cg_iters == 0 {
            return Err(Error::Config("cg_iters must be at least 1".into()));
        }
        if self.damping < T::zero() {
            return Err(Error::Config("damping must be non-negative".into()));
        }
        Ok(())
    }
}

/// Natural gradient step `alpha * d` with `d ~ F^-1 g` and `alpha = sqrt(delta / g.d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalStep<T> {
    pub direction: Vec<T>,
    pub g_dot_d: T,
    pub alpha: T,
    pub step: Vec<T>,
    /// `0.5 * step^T F step`.
    pub predicted_kl: T,
}

/// Builds the step from a gradient and a Fisher operator; `None` if `g.d <= 0`.
pub fn natural_step<T, F>(g: &[T], mut apply_fisher: F, delta_kl: T, cg_iters: usize) -> Result<Option<NaturalStep<T>>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Vec<T>,
{
    if !all_finite(g) {
        return Err(Error::NonFinite("policy gradient"));
    }
    let cg = conjugate_gradient(&mut apply_fisher, g, cg_iters, T::lit(1e-10))?;
    let g_dot_d = dot(g, &cg.x);
    if !(g_dot_d > T::zero()) || !g_dot_d.is_finite() {
        return Ok(None);
    }
    let alpha = (delta_kl / g_dot_d).sqrt();
    let step: Vec<T> = cg.x.iter().map(|&d| alpha * d).collect();
    let fs = apply_fisher(&step);
    let predicted_kl = T::lit(0.5) * dot(&step, &fs);
    Ok(Some(NaturalStep {
        direction: cg.x,
        g_dot_d,
        alpha,
        step,
        predicted_kl,
    }))
}

fn direction<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    batch: &BatchSample<T>,
    cfg: &TrustRegionConfig<T>,
) -> Result<Option<NaturalStep<T>>> {
    cfg.validate()?;
    let g = reinforce_gradient(policy, params, batch)?;
    let fwd = policy.forward(params, &batch.data)?;
    let mut failure = None;
    let step = natural_step(
        &g,
        |v| match policy.fisher_vector_product(params, &fwd, v, cfg.damping) {
            Ok(out) => out,
            Err(e) => {
                failure = Some(e);
                vec![T::nan(); v.len()]
            }
        },
        cfg.delta_kl,
        cfg.cg_iters,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    step
}

/// Importance-weighted surrogate `(1/M) sum_t exp(log pi_new - log pi_old) * advantage_t`.
pub fn surrogate<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    old_log_probs: &[T],
    batch: &BatchSample<T>,
) -> Result<T> {
    let lp = policy.forward(params, &batch.data)?.log_probs(&batch.data.actions);
    let total: T = lp
        .iter()
        .zip(old_log_probs)
        .zip(&batch.advantages)
        .map(|((&n, &o), &a)| (n - o).exp() * a)
        .sum();
    Ok(total / T::lit(batch.len() as f64))
}

fn shifted<T: Scalar>(params: &[T], step: &[T], scale: T) -> Vec<T> {
    params.iter().zip(step).map(|(&p, &s)| p + scale * s).collect()
}

/// Truncated natural policy gradient: the full step, no line search.
pub fn tnpg_step<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    batch: &BatchSample<T>,
    cfg: &TrustRegionConfig<T>,
) -> Result<(Vec<T>, UpdateReport<T>)> {
    let Some(nat) = direction(policy, params, batch, cfg)? else {
        return Ok((params.to_vec(), UpdateReport::skipped("g.d <= 0, update skipped")));
    };
    let new = shifted(params, &nat.step, T::one());
    if !all_finite(&new) {
        return Ok((params.to_vec(), UpdateReport::skipped("non-finite natural step")));
    }
    let kl = policy.mean_kl(params, &new, &batch.data)?;
    Ok((
        new,
        UpdateReport {
            accepted: true,
            mean_kl: Some(kl),
            predicted_kl: Some(nat.predicted_kl),
            backtracks: 0,
            note: None,
        },
    ))
}

/// Natural step followed by a backtracking search that requires the surrogate
/// to improve and the mean KL to stay within `delta_kl`.
///
/// The search starts from the maximal step `sqrt(2 delta / d^T F d) * d`,
/// whose quadratic KL estimate equals `delta` (twice the TNPG step's).
pub fn trpo_step<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    batch: &BatchSample<T>,
    cfg: &TrustRegionConfig<T>,
) -> Result<(Vec<T>, UpdateReport<T>)> {
    let Some(nat) = direction(policy, params, batch, cfg)? else {
        return Ok((params.to_vec(), UpdateReport::skipped("g.d <= 0, update skipped")));
    };
    let old_fwd = policy.forward(params, &batch.data)?;
    let old_lp = old_fwd.log_probs(&batch.data.actions);
    let base = surrogate(policy, params, &old_lp, batch)?;
    let mut scale = T::lit(2.0).sqrt();
    for k in 0..=cfg.max_backtracks {
        let cand = shifted(params, &nat.step, scale);
        if all_finite(&cand) {
            let value = surrogate(policy, &cand, &old_lp, batch)?;
            let kl = crate::nn::policy::mean_kl_between(&old_fwd, &policy.forward(&cand, &batch.data)?);
            if value > base && kl <= cfg.delta_kl {
                return Ok((
                    cand,
                    UpdateReport {
                        accepted: true,
                        mean_kl: Some(kl),
                        predicted_kl: Some(nat.predicted_kl * scale * scale),
                        backtracks: k,
                        note: None,
                    },
                ));
            }
        }
        scale *= cfg.backtrack_ratio;
    }
    let mut report = UpdateReport::skipped("line search exhausted");
    report.mean_kl = Some(T::zero());
    report.backtracks = cfg.max_backtracks;
    Ok((params.to_vec(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::reinforce::tests::{tiny_batch, tiny_policy};

    fn diag(d: Vec<f64>) -> impl FnMut(&[f64]) -> Vec<f64> {
        move |v: &[f64]| v.iter().zip(&d).map(|(a, b)| a * b).collect()
    }

    #[test]
    fn identity_fisher_example() {
        let s = natural_step(&[3.0, 4.0], diag(vec![1.0, 1.0]), 0.5, 10)
            .unwrap()
            .unwrap();
        assert!((s.direction[0] - 3.0).abs() < 1e-12 && (s.direction[1] - 4.0).abs() < 1e-12);
        assert!((s.g_dot_d - 25.0).abs() < 1e-12);
        assert!((s.alpha - 0.02f64.sqrt()).abs() < 1e-12);
        assert!((s.step[0] - 0.42426).abs() < 1e-5 && (s.step[1] - 0.56569).abs() < 1e-5);
    }

    #[test]
    fn diagonal_fisher_example() {
        let delta = 0.1;
        let s = natural_step(&[2.0, 1.0], diag(vec![4.0, 1.0]), delta, 10)
            .unwrap()
            .unwrap();
        assert!((s.direction[0] - 0.5).abs() < 1e-12 && (s.direction[1] - 1.0).abs() < 1e-12);
        assert!((s.alpha - (delta / 2.0f64).sqrt()).abs() < 1e-12);
        assert!((s.predicted_kl - delta / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        assert!(natural_step(&[0.0, 0.0], diag(vec![1.0, 1.0]), 0.5, 10)
            .unwrap()
            .is_none());
        let pi = tiny_policy(0);
        let b = tiny_batch(&[0.0, 0.0, 0.0, 0.0], 1);
        let cfg = TrustRegionConfig::new(0.05);
        let (p, r) = tnpg_step(&pi, pi.params(), &b, &cfg).unwrap();
        assert_eq!(p, pi.params());
        assert!(!r.accepted);
    }

    #[test]
    fn surrogate_at_current_parameters_is_mean_advantage() {
        let pi = tiny_policy(2);
        let b = tiny_batch(&[1.0, -3.0, 2.0], 3);
        let lp = pi.forward(pi.params(), &b.data).unwrap().log_probs(&b.data.actions);
        let s = surrogate(&pi, pi.params(), &lp, &b).unwrap();
        let mean = b.advantages.iter().sum::<f64>() / 3.0;
        assert!((s - mean).abs() < 1e-12);
    }

    #[test]
    fn trpo_respects_trust_region() {
        let pi = tiny_policy(4);
        let b = tiny_batch(&[1.0, 0.5, -2.0, 3.0, 0.0, 1.5], 5);
        for &delta in &[1e-3, 1e-2, 0.1] {
            let cfg = TrustRegionConfig::new(delta);
            let (p, r) = trpo_step(&pi, pi.params(), &b, &cfg).unwrap();
            assert!(r.accepted);
            let kl = pi.mean_kl(pi.params(), &p, &b.data).unwrap();
            assert!(kl <= delta);
            assert_eq!(Some(kl), r.mean_kl);
        }
    }

    #[test]
    fn small_trust_region_kl_follows_quadratic_model() {
        let pi = tiny_policy(6);
        let rewards: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let b = tiny_batch(&rewards, 7);
        let delta = 1e-6;
        let mut cfg = TrustRegionConfig::new(delta);
        cfg.damping = 1e-5;
        let (_, r) = tnpg_step(&pi, pi.params(), &b, &cfg).unwrap();
        let (pred, kl) = (r.predicted_kl.unwrap(), r.mean_kl.unwrap());
        assert!((pred - delta / 2.0).abs() < 0.2 * delta / 2.0, "predicted {pred}");
        assert!((kl - pred).abs() < 0.2 * pred, "measured {kl} vs {pred}");
    }

    #[test]
    fn trpo_full_step_has_twice_the_tnpg_model_kl() {
        let pi = tiny_policy(6);
        let rewards: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let b = tiny_batch(&rewards, 7);
        let mut cfg = TrustRegionConfig::new(1e-6);
        cfg.damping = 1e-5;
        let (p_tnpg, rn) = tnpg_step(&pi, pi.params(), &b, &cfg).unwrap();
        let (p_trpo, rt) = trpo_step(&pi, pi.params(), &b, &cfg).unwrap();
        assert_eq!(rt.backtracks, 0);
        let pred = rt.predicted_kl.unwrap();
        assert!((pred - 1e-6).abs() < 1e-8, "predicted {pred}");
        assert!((pred - 2.0 * rn.predicted_kl.unwrap()).abs() < 1e-12);
        for ((&a, &b), &c) in p_tnpg.iter().zip(&p_trpo).zip(pi.params()) {
            assert!(((b - c) - 2f64.sqrt() * (a - c)).abs() < 1e-12);
        }
    }

    #[test]
    fn trpo_zero_advantages_unchanged() {
        let pi = tiny_policy(8);
        let b = tiny_batch(&[0.0; 5], 9);
        let (p, _) = trpo_step(&pi, pi.params(), &b, &TrustRegionConfig::new(0.05)).unwrap();
        assert_eq!(p, pi.params());
    }

    #[test]
    fn invalid_delta_rejected() {
        let pi = tiny_policy(0);
        let b = tiny_batch(&[1.0], 0);
        assert!(tnpg_step(&pi, pi.params(), &b, &TrustRegionConfig::new(0.0)).is_err());
    }
}
