use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::nn::GaussianPolicy;
use crate::scalar::Scalar;

use super::batch::BatchSample;
use super::optim::Adam;
use super::UpdateReport;

/// `(1/M) sum_t grad log pi(a_t | s_t) * advantage_t`, with `M` the number of timesteps.
pub fn reinforce_gradient<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    batch: &BatchSample<T>,
) -> Result<Vec<T>> {
    if batch.is_empty() {
        return Err(Error::Empty("REINFORCE batch"));
    }
    let (_, mut g) = policy.weighted_log_prob_grad(params, &batch.data, &batch.advantages)?;
    let inv_m = T::one() / T::lit(batch.len() as f64);
    for gi in &mut g {
        *gi *= inv_m;
    }
    Ok(g)
}

/// Update rule applied to the REINFORCE gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepRule {
    /// Plain ascent, `theta + lr * g`.
    Sgd,
    /// Adam with moments carried across iterations.
    Adam,
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(StepRule::Sgd),
            "adam" => Ok(StepRule::Adam),
            _ => Err(Error::Config(format!(
                "unknown optimizer `{s}` (expected `sgd` or `adam`)"
            ))),
        }
    }
}

/// One plain gradient ascent step `theta + learning_rate * g`.
pub fn reinforce_step<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    batch: &BatchSample<T>,
    learning_rate: T,
) -> Result<(Vec<T>, UpdateReport<T>)> {
    let g = reinforce_gradient(policy, params, batch)?;
    let new: Vec<T> = params.iter().zip(&g).map(|(&p, &gi)| p + learning_rate * gi).collect();
    finish(policy, params, new, batch)
}

/// One Adam ascent step on the REINFORCE gradient. `adam` keeps its moments
/// across iterations and is left untouched if the step is rejected.
pub fn reinforce_adam_step<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    batch: &BatchSample<T>,
    adam: &mut Adam<T>,
) -> Result<(Vec<T>, UpdateReport<T>)> {
    let g = reinforce_gradient(policy, params, batch)?;
    let neg: Vec<T> = g.iter().map(|&x| -x).collect();
    let mut next = adam.clone();
    let mut new = params.to_vec();
    next.step(&mut new, &neg)?;
    let out = finish(policy, params, new, batch)?;
    if out.1.accepted {
        *adam = next;
    }
    Ok(out)
}

fn finish<T: Scalar>(
    policy: &GaussianPolicy<T>,
    params: &[T],
    new: Vec<T>,
    batch: &BatchSample<T>,
) -> Result<(Vec<T>, UpdateReport<T>)> {
    if !all_finite(&new) {
        return Ok((params.to_vec(), UpdateReport::skipped("non-finite REINFORCE step")));
    }
    let kl = policy.mean_kl(params, &new, &batch.data)?;
    Ok((
        new,
        UpdateReport {
            accepted: true,
            mean_kl: Some(kl),
            predicted_kl: None,
            backtracks: 0,
            note: None,
        },
    ))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mdp::Trajectory;
    use crate::nn::{Activation, PolicyArch};
    use crate::rng::SeededRng;

    pub(crate) fn tiny_policy(seed: u64) -> GaussianPolicy<f64> {
        let arch = PolicyArch::Mlp {
            hidden: vec![(3, Activation::Tanh)],
        };
        let mut rng = SeededRng::new(seed, 0);
        let mut pi = GaussianPolicy::new(arch, 2, 1, &mut rng).unwrap();
        let mut p = pi.params().to_vec();
        let ls = pi.log_std_range();
        p[ls].iter_mut().for_each(|v| *v = -0.3);
        pi.set_params(&p).unwrap();
        pi
    }

    pub(crate) fn tiny_batch(rewards: &[f64], seed: u64) -> BatchSample<f64> {
        let mut rng = SeededRng::new(seed, 1);
        let t = Trajectory {
            observations: rewards.iter().map(|_| vec![rng.normal(), rng.normal()]).collect(),
            actions: rewards.iter().map(|_| vec![rng.normal()]).collect(),
            rewards: rewards.to_vec(),
            final_observation: vec![0.0, 0.0],
            terminated: false,
        };
        BatchSample::new(&[t], 0.9, None).unwrap()
    }

    fn surrogate(pi: &GaussianPolicy<f64>, p: &[f64], b: &BatchSample<f64>) -> f64 {
        let lp = pi.forward(p, &b.data).unwrap().log_probs(&b.data.actions);
        lp.iter().zip(&b.advantages).map(|(l, a)| l * a).sum::<f64>() / b.len() as f64
    }

    #[test]
    fn zero_advantages_give_zero_gradient() {
        let pi = tiny_policy(0);
        let b = tiny_batch(&[0.0, 0.0, 0.0], 0);
        let g = reinforce_gradient(&pi, pi.params(), &b).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_equals_score() {
        let pi = tiny_policy(1);
        let b = tiny_batch(&[1.0], 2);
        let g = reinforce_gradient(&pi, pi.params(), &b).unwrap();
        let (_, score) = pi.weighted_log_prob_grad(pi.params(), &b.data, &[1.0]).unwrap();
        assert_eq!(g, score);
    }

    #[test]
    fn matches_finite_difference_surrogate() {
        let pi = tiny_policy(3);
        let b = tiny_batch(&[1.0, -2.0, 0.5], 4);
        let g = reinforce_gradient(&pi, pi.params(), &b).unwrap();
        let h = 1e-6;
        for i in 0..g.len() {
            let mut a = pi.params().to_vec();
            let mut c = a.clone();
            a[i] += h;
            c[i] -= h;
            let fd = (surrogate(&pi, &a, &b) - surrogate(&pi, &c, &b)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-4 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let pi = tiny_policy(0);
        let mut b = tiny_batch(&[1.0], 0);
        b.rewards.clear();
        assert!(reinforce_gradient(&pi, pi.params(), &b).is_err());
    }

    #[test]
    fn step_moves_along_gradient() {
        let pi = tiny_policy(5);
        let b = tiny_batch(&[1.0, 2.0, 3.0], 6);
        let (new, report) = reinforce_step(&pi, pi.params(), &b, 1e-2).unwrap();
        assert!(report.accepted);
        assert!(surrogate(&pi, &new, &b) > surrogate(&pi, pi.params(), &b));
    }

    #[test]
    fn adam_step_ascends_and_advances_moments() {
        let pi = tiny_policy(5);
        let b = tiny_batch(&[1.0, 2.0, 3.0], 6);
        let mut adam = Adam::new(pi.num_params(), 1e-3);
        let (new, report) = reinforce_adam_step(&pi, pi.params(), &b, &mut adam).unwrap();
        assert!(report.accepted);
        assert_eq!(adam.steps(), 1);
        assert!(surrogate(&pi, &new, &b) > surrogate(&pi, pi.params(), &b));
        let moved = pi
            .params()
            .iter()
            .zip(&new)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(moved <= 1e-3 * (1.0 + 1e-9));
    }
}
