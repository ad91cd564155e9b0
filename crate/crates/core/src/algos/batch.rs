use crate::error::{Error, Result};
use crate::mdp::{discounted_returns, rollout, Actor, Env, Trajectory};
use crate::nn::SequenceData;
use crate::rng::{derive_seed, SeededRng};
use crate::scalar::Scalar;

use super::baseline::LinearBaseline;

/// Generator for trajectory `index` of `iteration` under run seed `seed`.
pub fn trajectory_rng(seed: u64, iteration: usize, index: usize) -> SeededRng {
    SeededRng::new(derive_seed(seed, iteration as u64), index as u64)
}

/// Collects whole episodes until at least `step_budget` steps have been simulated.
///
/// The last episode is never truncated, so the total may overshoot.
pub fn collect_batch<T, A>(
    env: &mut dyn Env<T>,
    actor: &A,
    horizon: usize,
    step_budget: usize,
    seed: u64,
    iteration: usize,
) -> Result<Vec<Trajectory<T>>>
where
    T: Scalar,
    A: Actor<T> + ?Sized,
{
    if step_budget == 0 || horizon == 0 {
        return Err(Error::Config("step budget and horizon must be positive".into()));
    }
    let mut trajs = Vec::new();
    let mut steps = 0;
    while steps < step_budget {
        let mut rng = trajectory_rng(seed, iteration, trajs.len());
        let t = rollout(env, actor, horizon, &mut rng)?;
        if t.is_empty() {
            return Err(Error::Numerical("episode produced no steps".into()));
        }
        steps += t.len();
        trajs.push(t);
    }
    Ok(trajs)
}

/// Flattened per-timestep view of a batch with returns and advantages.
#[derive(Clone, Debug)]
pub struct BatchSample<T> {
    pub data: SequenceData<T>,
    pub next_observations: Vec<Vec<T>>,
    pub rewards: Vec<T>,
    pub times: Vec<usize>,
    pub returns: Vec<T>,
    pub baselines: Vec<T>,
    pub advantages: Vec<T>,
    /// Undiscounted return of each trajectory.
    pub episode_returns: Vec<T>,
}

impl<T: Scalar> BatchSample<T> {
    /// Computes discounted returns per trajectory and, when a baseline is given,
    /// refits it on this batch before forming `advantage = return - baseline`.
    pub fn new(trajs: &[Trajectory<T>], discount: T, baseline: Option<&mut LinearBaseline<T>>) -> Result<Self> {
        let data = SequenceData::from_trajectories(trajs)?;
        let mut next_observations = Vec::with_capacity(data.len());
        let mut rewards = Vec::with_capacity(data.len());
        let mut times = Vec::with_capacity(data.len());
        let mut returns = Vec::with_capacity(data.len());
        let mut obs_rows = Vec::with_capacity(data.len());
        for t in trajs.iter().filter(|t| !t.is_empty()) {
            rewards.extend_from_slice(&t.rewards);
            returns.extend(discounted_returns(&t.rewards, discount));
            times.extend(0..t.len());
            for i in 0..t.len() {
                obs_rows.push(t.observations[i].as_slice());
                next_observations.push(t.next_observation(i).to_vec());
            }
        }
        let baselines = match baseline {
            Some(b) => {
                b.fit(&obs_rows, &times, &returns)?;
                obs_rows.iter().zip(&times).map(|(o, &t)| b.predict(o, t)).collect()
            }
            None => vec![T::zero(); returns.len()],
        };
        let advantages = returns.iter().zip(&baselines).map(|(&r, &b)| r - b).collect();
        Ok(Self {
            data,
            next_observations,
            rewards,
            times,
            returns,
            baselines,
            advantages,
            episode_returns: trajs.iter().map(|t| t.total_reward()).collect(),
        })
    }

    /// Number of timesteps `M`.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn num_trajectories(&self) -> usize {
        self.data.starts.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{GaussianPolicy, PolicyArch};
    use crate::tasks::{PhysicsParams, TaskKind};

    fn traj(rewards: &[f64]) -> Trajectory<f64> {
        Trajectory {
            observations: rewards.iter().map(|&r| vec![r, 1.0]).collect(),
            actions: rewards.iter().map(|_| vec![0.0]).collect(),
            rewards: rewards.to_vec(),
            final_observation: vec![0.0, 0.0],
            terminated: false,
        }
    }

    #[test]
    fn returns_are_per_trajectory() {
        let b = BatchSample::new(&[traj(&[1.0, 1.0]), traj(&[2.0])], 0.5, None).unwrap();
        assert_eq!(b.returns, vec![1.5, 1.0, 2.0]);
        assert_eq!(b.times, vec![0, 1, 0]);
        assert_eq!(b.advantages, b.returns);
        assert_eq!(b.episode_returns, vec![2.0, 2.0]);
        assert_eq!(b.data.starts, vec![0, 2]);
        assert_eq!(b.next_observations[0], vec![1.0, 1.0]);
        assert_eq!(b.next_observations[1], vec![0.0, 0.0]);
    }

    #[test]
    fn advantage_is_return_minus_baseline() {
        let trajs: Vec<_> = (0..4).map(|k| traj(&[k as f64, 1.0, -0.5, 2.0])).collect();
        let mut base = LinearBaseline::new(2);
        let b = BatchSample::new(&trajs, 0.9, Some(&mut base)).unwrap();
        for i in 0..b.len() {
            assert_eq!(b.advantages[i], b.returns[i] - b.baselines[i]);
        }
    }

    #[test]
    fn budget_of_one_horizon_gives_one_episode() {
        let kind = TaskKind::AcrobotSwingUp;
        let mut env = kind.build::<f64>(PhysicsParams::for_task(kind)).unwrap();
        let mut rng = SeededRng::new(0, 0);
        let pi = GaussianPolicy::new(PolicyArch::default_mlp(), env.observation_dim(), 1, &mut rng).unwrap();
        let trajs = collect_batch(env.as_mut(), &pi, 500, 500, 3, 0).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].len(), 500);
    }

    #[test]
    fn batch_is_deterministic_and_overshoots() {
        let kind = TaskKind::CartPoleBalance;
        let mut env = kind.build::<f64>(PhysicsParams::for_task(kind)).unwrap();
        let mut rng = SeededRng::new(0, 0);
        let pi = GaussianPolicy::new(PolicyArch::default_mlp(), 4, 1, &mut rng).unwrap();
        let a = collect_batch(env.as_mut(), &pi, 100, 250, 9, 4).unwrap();
        let b = collect_batch(env.as_mut(), &pi, 100, 250, 9, 4).unwrap();
        assert_eq!(a, b);
        let steps: usize = a.iter().map(|t| t.len()).sum();
        assert!(steps >= 250);
        assert!(steps - a.last().unwrap().len() < 250);
    }
}
