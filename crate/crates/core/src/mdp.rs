//! Episodic task interface, trajectory collection and return bookkeeping.

use crate::error::{check_dim, Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tasks::PhysicsParams;

/// Static description of a task as seen by a learner.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec<T> {
    pub observation_dim: usize,
    pub action_dim: usize,
    pub action_lower: Vec<T>,
    pub action_upper: Vec<T>,
    pub horizon: usize,
    pub discount: T,
}

impl<T: Scalar> EnvSpec<T> {
    pub fn new(
        observation_dim: usize,
        action_lower: Vec<T>,
        action_upper: Vec<T>,
        horizon: usize,
        discount: T,
    ) -> Result<Self> {
        if observation_dim == 0 || action_lower.is_empty() {
            return Err(Error::Config("observation and action dims must be positive".into()));
        }
        check_dim("action bounds", action_lower.len(), action_upper.len())?;
        if action_lower.iter().zip(&action_upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config("action_lower must be below action_upper".into()));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(discount > T::zero() && discount <= T::one()) {
            return Err(Error::Config(format!("discount {discount} outside (0, 1]")));
        }
        Ok(Self {
            observation_dim,
            action_dim: action_lower.len(),
            action_lower,
            action_upper,
            horizon,
            discount,
        })
    }

    /// Spec of `env` under the given protocol horizon and discount.
    pub fn of(env: &dyn Env<T>, horizon: usize, discount: T) -> Result<Self> {
        let (lo, hi) = env.action_bounds();
        Self::new(env.observation_dim(), lo, hi, horizon, discount)
    }
}

/// Outcome of one control step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult<T> {
    pub observation: Vec<T>,
    pub reward: T,
    pub terminated: bool,
}

/// A simulated control task.
///
/// `reset` draws the initial state; `step` applies an (already clipped) action
/// for one control interval.
pub trait Env<T: Scalar>: Send {
    fn name(&self) -> String;
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_bounds(&self) -> (Vec<T>, Vec<T>);
    fn reset(&mut self, rng: &mut SeededRng) -> Vec<T>;
    fn step(&mut self, action: &[T]) -> Result<StepResult<T>>;
    fn physics(&self) -> &PhysicsParams<T>;
    fn set_physics(&mut self, physics: PhysicsParams<T>);
    fn clone_box(&self) -> Box<dyn Env<T>>;
}

impl<T: Scalar> Clone for Box<dyn Env<T>> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Anything that picks actions from observations during a rollout.
///
/// `Memory` carries per-episode state (recurrent hidden state, exploration
/// noise); feed-forward policies use `()`.
pub trait Actor<T: Scalar> {
    type Memory: Clone;

    fn action_dim(&self) -> usize;
    fn start(&self) -> Self::Memory;
    fn act(&self, memory: &mut Self::Memory, observation: &[T], rng: &mut SeededRng) -> Vec<T>;
}

/// One episode: `observations[t]` was seen, `actions[t]` taken, `rewards[t]` received.
///
/// Actions are stored as emitted by the actor, before clipping to the task's
/// bounds, so stochastic-policy log-densities stay well defined.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory<T> {
    pub observations: Vec<Vec<T>>,
    pub actions: Vec<Vec<T>>,
    pub rewards: Vec<T>,
    /// Observation after the last step.
    pub final_observation: Vec<T>,
    pub terminated: bool,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Undiscounted episode return.
    pub fn total_reward(&self) -> T {
        self.rewards.iter().copied().sum()
    }

    /// Observation following step `t`.
    pub fn next_observation(&self, t: usize) -> &[T] {
        if t + 1 < self.len() {
            &self.observations[t + 1]
        } else {
            &self.final_observation
        }
    }
}

pub fn clip_action<T: Scalar>(action: &[T], lower: &[T], upper: &[T]) -> Vec<T> {
    action
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&a, (&lo, &hi))| a.max(lo).min(hi))
        .collect()
}

/// Runs one episode of at most `horizon` steps, stopping at the first termination.
pub fn rollout<T, A>(env: &mut dyn Env<T>, actor: &A, horizon: usize, rng: &mut SeededRng) -> Result<Trajectory<T>>
where
    T: Scalar,
    A: Actor<T> + ?Sized,
{
    check_dim("actor action dim", env.action_dim(), actor.action_dim())?;
    let (lower, upper) = env.action_bounds();
    let mut memory = actor.start();
    let mut observation = env.reset(rng);
    let mut traj = Trajectory {
        observations: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        final_observation: Vec::new(),
        terminated: false,
    };
    for _ in 0..horizon {
        let action = actor.act(&mut memory, &observation, rng);
        check_dim("actor output", lower.len(), action.len())?;
        let applied = clip_action(&action, &lower, &upper);
        let step = env.step(&applied)?;
        traj.observations
            .push(std::mem::replace(&mut observation, step.observation));
        traj.actions.push(action);
        traj.rewards.push(step.reward);
        if step.terminated {
            traj.terminated = true;
            break;
        }
    }
    traj.final_observation = observation;
    Ok(traj)
}

/// `out[t] = rewards[t] + discount * out[t + 1]`.
pub fn discounted_returns<T: Scalar>(rewards: &[T], discount: T) -> Vec<T> {
    let mut out = vec![T::zero(); rewards.len()];
    let mut acc = T::zero();
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + discount * acc;
        out[t] = acc;
    }
    out
}

/// Mean undiscounted episode return pooled over every iteration of a run.
///
/// Each inner slice holds the returns of the trajectories collected in one
/// iteration; every trajectory carries equal weight.
pub fn performance_metric<T: Scalar, R: AsRef<[T]>>(iterations: &[R]) -> Result<T> {
    let mut total = T::zero();
    let mut count = 0usize;
    for it in iterations {
        for &r in it.as_ref() {
            total += r;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("performance metric needs at least one trajectory"));
    }
    Ok(total / T::lit(count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn discounted_returns_examples() {
        assert_eq!(discounted_returns(&[1.0, 1.0, 1.0], 0.5), vec![1.75, 1.5, 1.0]);
        assert_eq!(discounted_returns(&[1.0, 1.0, 1.0], 1.0), vec![3.0, 2.0, 1.0]);
        assert_eq!(discounted_returns(&[5.0], 0.3), vec![5.0]);
        assert!(discounted_returns::<f64>(&[], 0.9).is_empty());
    }

    #[test]
    fn performance_metric_examples() {
        let v: f64 = performance_metric(&[vec![1.0, 2.0], vec![3.0]]).unwrap();
        assert_eq!(v, 2.0);
        let c: f64 = performance_metric(&vec![vec![4.5]; 7]).unwrap();
        assert_eq!(c, 4.5);
        assert!(performance_metric::<f64, Vec<f64>>(&[vec![], vec![]]).is_err());
    }

    #[test]
    fn env_spec_validation() {
        assert!(EnvSpec::new(2, vec![-1.0], vec![1.0], 10, 0.99).is_ok());
        assert!(EnvSpec::new(2, vec![1.0], vec![1.0], 10, 0.99).is_err());
        assert!(EnvSpec::new(2, vec![-1.0], vec![1.0], 0, 0.99).is_err());
        assert!(EnvSpec::new(2, vec![-1.0], vec![1.0], 5, 0.0).is_err());
        assert!(EnvSpec::new(2, vec![-1.0], vec![1.0], 5, 1.0).is_ok());
    }

    proptest! {
        #[test]
        fn returns_satisfy_backward_recursion(
            rewards in prop::collection::vec(-100.0f64..100.0, 1..50),
            gamma in 0.01f64..=1.0,
        ) {
            let r = discounted_returns(&rewards, gamma);
            let n = rewards.len();
            prop_assert_eq!(r[n - 1], rewards[n - 1]);
            for t in 0..n - 1 {
                prop_assert_eq!(r[t], rewards[t] + gamma * r[t + 1]);
            }
        }

        #[test]
        fn metric_invariant_to_repartition(
            returns in prop::collection::vec(-1e3f64..1e3, 1..40),
            cut in 0usize..40,
            seed in 0u64..1000,
        ) {
            let whole: f64 = performance_metric(std::slice::from_ref(&returns)).unwrap();
            let cut = cut.min(returns.len());
            let (a, b) = returns.split_at(cut);
            let split: f64 = performance_metric(&[a.to_vec(), b.to_vec()]).unwrap();
            let mut shuffled = returns.clone();
            let mut rng = SeededRng::new(seed, 0);
            for i in (1..shuffled.len()).rev() {
                let j = rng.index(i + 1);
                shuffled.swap(i, j);
            }
            let perm: f64 = performance_metric(&[shuffled]).unwrap();
            prop_assert!((whole - split).abs() <= 1e-9 * (1.0 + whole.abs()));
            prop_assert!((whole - perm).abs() <= 1e-9 * (1.0 + whole.abs()));
        }
    }
}
