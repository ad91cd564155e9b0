//! Deep deterministic policy gradient.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, Matrix};
use crate::mdp::{clip_action, Env, Trajectory};
use crate::nn::{DeterministicPolicy, QFunction};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::optim::Adam;

/// Reward multiplier applied before storage in the pool.
pub fn scale_reward<T: Scalar>(r: T, factor: T) -> T {
    r * factor
}

/// `target <- tau * live + (1 - tau) * target`.
pub fn soft_update<T: Scalar>(target: &mut [T], live: &[T], tau: T) -> Result<()> {
    check_dim("soft update", target.len(), live.len())?;
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(Error::Config(format!("tau {tau} outside [0, 1]")));
    }
    for (t, &l) in target.iter_mut().zip(live) {
        *t = tau * l + (T::one() - tau) * *t;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub observation: Vec<T>,
    pub action: Vec<T>,
    /// Scaled reward.
    pub reward: T,
    pub next_observation: Vec<T>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Clone, Debug)]
pub struct ReplayPool<T> {
    capacity: usize,
    items: Vec<Transition<T>>,
    cursor: usize,
}

/// Column-stacked minibatch.
#[derive(Clone, Debug)]
pub struct MiniBatch<T> {
    pub observations: Matrix<T>,
    pub actions: Matrix<T>,
    pub rewards: Vec<T>,
    pub next_observations: Matrix<T>,
    pub terminals: Vec<bool>,
}

impl<T: Scalar> MiniBatch<T> {
    pub fn from_transitions(items: &[&Transition<T>]) -> Result<Self> {
        let first = items.first().ok_or(Error::Empty("minibatch"))?;
        let (od, ad) = (first.observation.len(), first.action.len());
        let rows = |f: &dyn Fn(&Transition<T>) -> &[T], w: usize| {
            Matrix::from_rows(&items.iter().map(|t| f(t)).collect::<Vec<_>>(), w)
        };
        Ok(Self {
            observations: rows(&|t| &t.observation, od),
            actions: rows(&|t| &t.action, ad),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_observations: rows(&|t| &t.next_observation, od),
            terminals: items.iter().map(|t| t.terminal).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

impl<T: Scalar> ReplayPool<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Overwrites the oldest entry once full.
    pub fn push(&mut self, t: Transition<T>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition<T> {
        &self.items[i]
    }

    /// Uniform indices with replacement over the filled region.
    pub fn sample_indices(&self, batch: usize, rng: &mut SeededRng) -> Vec<usize> {
        (0..batch).map(|_| rng.index(self.items.len())).collect()
    }

    pub fn sample(&self, batch: usize, rng: &mut SeededRng) -> Result<MiniBatch<T>> {
        if self.items.len() < batch || batch == 0 {
            return Err(Error::Empty("replay pool smaller than batch"));
        }
        let idx = self.sample_indices(batch, rng);
        MiniBatch::from_transitions(&idx.iter().map(|&i| &self.items[i]).collect::<Vec<_>>())
    }
}

/// Mean-reverting exploration noise `x <- x - theta x + sigma N(0, 1)`, one coordinate per action.
#[derive(Clone, Debug, PartialEq)]
pub struct OuNoise<T> {
    pub theta: T,
    pub sigma: T,
    pub state: Vec<T>,
}

impl<T: Scalar> OuNoise<T> {
    pub fn new(dim: usize, theta: T, sigma: T) -> Self {
        Self {
            theta,
            sigma,
            state: vec![T::zero(); dim],
        }
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn sample(&mut self, rng: &mut SeededRng) -> Vec<T> {
        for x in &mut self.state {
            *x = *x - self.theta * *x + self.sigma * rng.normal::<T>();
        }
        self.state.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DdpgConfig<T> {
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub actor_learning_rate: T,
    pub critic_learning_rate: T,
    pub critic_weight_decay: T,
    pub tau: T,
    pub reward_scale: T,
    pub warmup_steps: usize,
    pub ou_theta: T,
    pub ou_sigma: T,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl<T: Scalar> Default for DdpgConfig<T> {
    fn default() -> Self {
        Self {
            batch_size: 64,
            replay_capacity: 1_000_000,
            actor_learning_rate: T::lit(1e-4),
            critic_learning_rate: T::lit(1e-3),
            critic_weight_decay: T::lit(1e-2),
            tau: T::lit(1e-3),
            reward_scale: T::lit(0.1),
            warmup_steps: 10_000,
            ou_theta: T::lit(0.15),
            ou_sigma: T::lit(0.2),
            actor_hidden: vec![400, 300],
            critic_hidden: vec![400, 300],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Ddpg<T> {
    pub actor: DeterministicPolicy<T>,
    pub critic: QFunction<T>,
    pub target_actor: Vec<T>,
    pub target_critic: Vec<T>,
    actor_opt: Adam<T>,
    critic_opt: Adam<T>,
    pub pool: ReplayPool<T>,
    pub noise: OuNoise<T>,
    pub config: DdpgConfig<T>,
    pub discount: T,
    pub env_steps: usize,
    pub updates: usize,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Ddpg<T> {
    pub fn new(
        obs_dim: usize,
        lower: &[T],
        upper: &[T],
        discount: T,
        config: DdpgConfig<T>,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let actor = DeterministicPolicy::new(obs_dim, lower, upper, &config.actor_hidden, rng)?;
        let critic = QFunction::new(obs_dim, lower.len(), &config.critic_hidden, rng)?;
        Ok(Self {
            target_actor: actor.params.clone(),
            target_critic: critic.params.clone(),
            actor_opt: Adam::new(actor.params.len(), config.actor_learning_rate),
            critic_opt: Adam::new(critic.params.len(), config.critic_learning_rate),
            pool: ReplayPool::new(config.replay_capacity)?,
            noise: OuNoise::new(lower.len(), config.ou_theta, config.ou_sigma),
            actor,
            critic,
            config,
            discount,
            env_steps: 0,
            updates: 0,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        })
    }

    /// `y_i = r_i + gamma Q'(s'_i, mu'(s'_i))`, or `r_i` on terminal transitions.
    pub fn critic_targets(&self, mb: &MiniBatch<T>) -> Vec<T> {
        let (_, next_a) = self
            .actor
            .forward_batch(&self.target_actor, mb.next_observations.clone());
        let (_, next_q) = self
            .critic
            .forward_batch(&self.target_critic, &mb.next_observations, &next_a);
        mb.rewards
            .iter()
            .zip(&next_q)
            .zip(&mb.terminals)
            .map(|((&r, &q), &term)| if term { r } else { r + self.discount * q })
            .collect()
    }

    /// `(1/B) sum (y_i - Q(s_i, a_i))^2` and its gradient at `params`, without weight decay.
    pub fn critic_loss_grad(&self, params: &[T], mb: &MiniBatch<T>, targets: &[T]) -> Result<(T, Vec<T>)> {
        check_dim("critic targets", mb.len(), targets.len())?;
        let (cache, q) = self.critic.forward_batch(params, &mb.observations, &mb.actions);
        let b = T::lit(mb.len() as f64);
        let mut loss = T::zero();
        let d: Vec<T> = q
            .iter()
            .zip(targets)
            .map(|(&qi, &yi)| {
                loss += (yi - qi) * (yi - qi);
                T::lit(2.0) * (qi - yi) / b
            })
            .collect();
        let (grad, _) = self.critic.backward_batch(params, &cache, &d);
        Ok((loss / b, grad))
    }

    /// `(1/B) sum Q(s_i, mu_theta(s_i))` and its gradient with respect to the actor parameters.
    pub fn actor_objective_grad(&self, params: &[T], mb: &MiniBatch<T>) -> (T, Vec<T>) {
        let (acache, actions) = self.actor.forward_batch(params, mb.observations.clone());
        let (ccache, q) = self
            .critic
            .forward_batch(&self.critic.params, &mb.observations, &actions);
        let b = T::lit(mb.len() as f64);
        let value = q.iter().copied().sum::<T>() / b;
        let (_, da) = self
            .critic
            .backward_batch(&self.critic.params, &ccache, &vec![T::one() / b; mb.len()]);
        (value, self.actor.backward_batch(params, &acache, da))
    }

    /// One descent step on the critic loss plus `weight_decay * |phi|^2 / 2`; returns the loss.
    pub fn critic_update(&mut self, mb: &MiniBatch<T>) -> Result<T> {
        let targets = self.critic_targets(mb);
        let (loss, mut grad) = self.critic_loss_grad(&self.critic.params, mb, &targets)?;
        for (g, &p) in grad.iter_mut().zip(&self.critic.params) {
            *g += self.config.critic_weight_decay * p;
        }
        self.critic_opt.step(&mut self.critic.params, &grad)?;
        if !all_finite(&self.critic.params) {
            return Err(Error::NonFinite("critic parameters"));
        }
        Ok(loss)
    }

    /// One ascent step on the mean critic value of the actor's actions.
    pub fn actor_update(&mut self, mb: &MiniBatch<T>) -> Result<()> {
        let (_, grad) = self.actor_objective_grad(&self.actor.params, mb);
        let neg: Vec<T> = grad.iter().map(|&g| -g).collect();
        self.actor_opt.step(&mut self.actor.params, &neg)?;
        if !all_finite(&self.actor.params) {
            return Err(Error::NonFinite("actor parameters"));
        }
        Ok(())
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        soft_update(&mut self.target_actor, &self.actor.params, self.config.tau)?;
        soft_update(&mut self.target_critic, &self.critic.params, self.config.tau)
    }

    /// Critic step, actor step and target tracking on one sampled minibatch.
    /// Returns `None` while the pool is smaller than a batch.
    pub fn train_step(&mut self, rng: &mut SeededRng) -> Result<Option<T>> {
        if self.pool.len() < self.config.batch_size {
            return Ok(None);
        }
        let mb = self.pool.sample(self.config.batch_size, rng)?;
        let loss = self.critic_update(&mb)?;
        self.actor_update(&mb)?;
        self.soft_update_targets()?;
        self.updates += 1;
        Ok(Some(loss))
    }

    /// Runs one episode, storing every transition and training after the warmup.
    ///
    /// `reset_rng` only drives the initial state; `rng` drives exploration and minibatches.
    pub fn run_episode(
        &mut self,
        env: &mut dyn Env<T>,
        horizon: usize,
        explore: bool,
        reset_rng: &mut SeededRng,
        rng: &mut SeededRng,
    ) -> Result<Trajectory<T>> {
        check_dim("DDPG action dim", self.lower.len(), env.action_dim())?;
        self.noise.reset();
        let mut obs = env.reset(reset_rng);
        let mut traj = Trajectory::default();
        for _ in 0..horizon {
            let mut action = self.actor.act_with(&self.actor.params, &obs);
            if explore {
                for (a, n) in action.iter_mut().zip(self.noise.sample(rng)) {
                    *a += n;
                }
            }
            let action = clip_action(&action, &self.lower, &self.upper);
            let step = env.step(&action)?;
            self.pool.push(Transition {
                observation: obs.clone(),
                action: action.clone(),
                reward: scale_reward(step.reward, self.config.reward_scale),
                next_observation: step.observation.clone(),
                terminal: step.terminated,
            });
            self.env_steps += 1;
            traj.observations.push(std::mem::replace(&mut obs, step.observation));
            traj.actions.push(action);
            traj.rewards.push(step.reward);
            if self.env_steps > self.config.warmup_steps {
                self.train_step(rng)?;
            }
            if step.terminated {
                traj.terminated = true;
                break;
            }
        }
        traj.final_observation = obs;
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny(discount: f64, seed: u64) -> Ddpg<f64> {
        let cfg = DdpgConfig {
            actor_hidden: vec![4],
            critic_hidden: vec![5],
            batch_size: 3,
            replay_capacity: 100,
            warmup_steps: 0,
            ..DdpgConfig::default()
        };
        Ddpg::new(2, &[-1.0], &[2.0], discount, cfg, &mut SeededRng::new(seed, 0)).unwrap()
    }

    fn batch(terminal: bool) -> MiniBatch<f64> {
        let t = |i: f64| Transition {
            observation: vec![0.1 * i, -0.3 + i],
            action: vec![0.5 - 0.2 * i],
            reward: i - 1.0,
            next_observation: vec![0.2, 0.1 * i],
            terminal: terminal && i == 1.0,
        };
        let items = [t(0.0), t(1.0), t(2.0)];
        MiniBatch::from_transitions(&items.iter().collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn soft_update_examples() {
        let mut t = vec![0.0, 1.0];
        soft_update(&mut t, &[2.0, 3.0], 1.0).unwrap();
        assert_eq!(t, vec![2.0, 3.0]);
        let mut t = vec![0.0];
        soft_update(&mut t, &[2.0], 0.0).unwrap();
        assert_eq!(t, vec![0.0]);
        soft_update(&mut t, &[2.0], 0.5).unwrap();
        assert_eq!(t, vec![1.0]);
        assert!(soft_update(&mut t, &[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn reward_scaling() {
        assert_eq!(scale_reward(10.0, 0.1), 1.0);
        assert_eq!(scale_reward(0.0, 0.1), 0.0);
    }

    #[test]
    fn undiscounted_and_terminal_targets_are_rewards() {
        let d = tiny(0.0, 0);
        let mb = batch(false);
        assert_eq!(d.critic_targets(&mb), mb.rewards);
        let d = tiny(0.99, 0);
        let mb = batch(true);
        let y = d.critic_targets(&mb);
        assert_eq!(y[1], mb.rewards[1]);
        assert_ne!(y[0], mb.rewards[0]);
    }

    #[test]
    fn zero_loss_at_fixed_point() {
        let d = tiny(0.9, 1);
        let mb = batch(false);
        let (_, q) = d.critic.forward_batch(&d.critic.params, &mb.observations, &mb.actions);
        let (loss, g) = d.critic_loss_grad(&d.critic.params, &mb, &q).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let d = tiny(0.9, 2);
        let mb = batch(true);
        let y = d.critic_targets(&mb);
        let (_, g) = d.critic_loss_grad(&d.critic.params, &mb, &y).unwrap();
        let h = 1e-6;
        for i in 0..g.len() {
            let mut a = d.critic.params.clone();
            let mut b = a.clone();
            a[i] += h;
            b[i] -= h;
            let fd =
                (d.critic_loss_grad(&a, &mb, &y).unwrap().0 - d.critic_loss_grad(&b, &mb, &y).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let d = tiny(0.9, 3);
        let mb = batch(false);
        let (_, g) = d.actor_objective_grad(&d.actor.params, &mb);
        let h = 1e-6;
        for i in 0..g.len() {
            let mut a = d.actor.params.clone();
            let mut b = a.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (d.actor_objective_grad(&a, &mb).0 - d.actor_objective_grad(&b, &mb).0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn action_independent_critic_gives_zero_actor_gradient() {
        let mut d = tiny(0.9, 4);
        let n = d.critic.params.len();
        d.critic.params = vec![0.0; n];
        d.critic.params[n - 1] = 3.0;
        let (v, g) = d.actor_objective_grad(&d.actor.params, &batch(false));
        assert_eq!(v, 3.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn replay_overwrites_oldest() {
        let mut pool = ReplayPool::new(3).unwrap();
        for i in 0..5 {
            pool.push(Transition {
                observation: vec![i as f64],
                action: vec![0.0],
                reward: i as f64,
                next_observation: vec![0.0],
                terminal: false,
            });
        }
        assert_eq!(pool.len(), 3);
        let mut r: Vec<f64> = (0..3).map(|i| pool.get(i).reward).collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(r, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn replay_sampling_is_uniform_over_filled_region() {
        let mut pool = ReplayPool::<f64>::new(100).unwrap();
        for _ in 0..10 {
            pool.push(Transition {
                observation: vec![0.0],
                action: vec![0.0],
                reward: 0.0,
                next_observation: vec![0.0],
                terminal: false,
            });
        }
        let mut rng = SeededRng::new(0, 0);
        let mut hist = [0usize; 10];
        let n = 100_000;
        for i in pool.sample_indices(n, &mut rng) {
            hist[i] += 1;
        }
        // Chi-square with 9 degrees of freedom; 27.88 is the 0.999 quantile.
        let e = n as f64 / 10.0;
        let chi2: f64 = hist.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 27.88, "chi2 {chi2}");
    }

    #[test]
    fn underfilled_pool_skips_training() {
        let mut d = tiny(0.9, 5);
        assert_eq!(d.train_step(&mut SeededRng::new(0, 0)).unwrap(), None);
    }

    #[test]
    fn noise_free_training_is_reproducible() {
        use crate::tasks::{PhysicsParams, TaskKind};
        let run = || {
            let kind = TaskKind::CartPoleBalance;
            let mut env = kind.build::<f64>(PhysicsParams::for_task(kind)).unwrap();
            let cfg = DdpgConfig {
                actor_hidden: vec![8],
                critic_hidden: vec![8],
                batch_size: 8,
                warmup_steps: 20,
                ..DdpgConfig::default()
            };
            let mut d = Ddpg::new(4, &[-10.0], &[10.0], 0.99, cfg, &mut SeededRng::new(1, 0)).unwrap();
            let mut rng = SeededRng::new(2, 0);
            for k in 0..3 {
                d.run_episode(env.as_mut(), 50, false, &mut SeededRng::new(3, k), &mut rng)
                    .unwrap();
            }
            (d.actor.params, d.critic.params)
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn soft_update_contracts(
            live in prop::collection::vec(-5.0f64..5.0, 1..8),
            seed in 0u64..1000,
            tau in 0.0f64..1.0,
        ) {
            let mut rng = SeededRng::new(seed, 0);
            let mut target: Vec<f64> = live.iter().map(|_| rng.normal()).collect();
            let dist = |t: &[f64]| t.iter().zip(&live).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let before = dist(&target);
            soft_update(&mut target, &live, tau).unwrap();
            prop_assert!((dist(&target) - (1.0 - tau) * before).abs() < 1e-9);
        }
    }
}
