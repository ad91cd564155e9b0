//! Uniform per-iteration interface over every algorithm, as driven by the runner.

use crate::algos::reps::reps_update;
use crate::algos::{
    collect_batch, reinforce_adam_step, reinforce_step, rwr_update, tnpg_step, trajectory_rng, trpo_step, Adam,
    BatchSample, Cem, CmaEs, Ddpg, LinearBaseline, StepRule,
};
use crate::error::{Error, Result};
use crate::mdp::{rollout, Env};
use crate::nn::GaussianPolicy;
use crate::rng::{derive_seed, SeededRng};

use super::config::{AlgorithmParams, Experiment};

/// Stream of the run's initialization generator.
pub const INIT_STREAM: u64 = u64::MAX - 1;
/// Stream of an iteration's search generator (CEM/CMA-ES sampling, DDPG noise and minibatches).
pub const SEARCH_STREAM: u64 = u64::MAX;

pub fn init_rng(seed: u64) -> SeededRng {
    SeededRng::new(seed, INIT_STREAM)
}

pub fn search_rng(seed: u64, iteration: usize) -> SeededRng {
    SeededRng::new(derive_seed(seed, iteration as u64), SEARCH_STREAM)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationOutcome {
    pub returns: Vec<f64>,
    pub steps: usize,
    pub mean_kl: Option<f64>,
}

pub trait Learner: Send {
    fn iterate(&mut self, env: &mut dyn Env<f64>, iteration: usize) -> Result<IterationOutcome>;

    /// Architecture descriptor and parameters of the current policy.
    fn checkpoint(&self) -> (String, Vec<f64>);

    /// Everything needed to continue bit-identically, or `None` if not snapshotable.
    fn state(&self) -> Option<Vec<f64>>;

    fn load_state(&mut self, state: &[f64]) -> Result<()>;
}

#[derive(Clone, Copy)]
struct Budget {
    seed: u64,
    horizon: usize,
    steps: usize,
    discount: f64,
}

struct BatchLearner {
    params: AlgorithmParams,
    policy: GaussianPolicy<f64>,
    baseline: LinearBaseline<f64>,
    /// Present for REINFORCE with the Adam rule.
    adam: Option<Adam<f64>>,
    budget: Budget,
    logs_kl: bool,
}

impl Learner for BatchLearner {
    fn iterate(&mut self, env: &mut dyn Env<f64>, iteration: usize) -> Result<IterationOutcome> {
        let b = self.budget;
        let trajs = collect_batch(env, &self.policy, b.horizon, b.steps, b.seed, iteration)?;
        let steps = trajs.iter().map(|t| t.len()).sum();
        let returns = trajs.iter().map(|t| t.total_reward()).collect();
        if self.params == AlgorithmParams::Random {
            return Ok(IterationOutcome {
                returns,
                steps,
                mean_kl: None,
            });
        }
        let batch = BatchSample::new(&trajs, b.discount, Some(&mut self.baseline))?;
        let theta = self.policy.params();
        let (new, report) = match &self.params {
            AlgorithmParams::Reinforce { learning_rate, .. } => match &mut self.adam {
                Some(adam) => reinforce_adam_step(&self.policy, theta, &batch, adam)?,
                None => reinforce_step(&self.policy, theta, &batch, *learning_rate)?,
            },
            AlgorithmParams::Tnpg(c) => tnpg_step(&self.policy, theta, &batch, c)?,
            AlgorithmParams::Trpo(c) => trpo_step(&self.policy, theta, &batch, c)?,
            AlgorithmParams::Rwr(c) => rwr_update(&self.policy, theta, &batch, c)?,
            AlgorithmParams::Reps(c) => {
                let (p, r, _) = reps_update(&self.policy, theta, &batch, c)?;
                (p, r)
            }
            _ => unreachable!("batch learner built for a batch algorithm"),
        };
        if let Some(note) = &report.note {
            log::debug!("iteration {iteration}: {note}");
        }
        self.policy.set_params(&new)?;
        Ok(IterationOutcome {
            returns,
            steps,
            mean_kl: self.logs_kl.then(|| report.mean_kl.unwrap_or(0.0)),
        })
    }

    fn checkpoint(&self) -> (String, Vec<f64>) {
        (self.policy.descriptor(), self.policy.params().to_vec())
    }

    fn state(&self) -> Option<Vec<f64>> {
        let mut s = self.policy.params().to_vec();
        if let Some(adam) = &self.adam {
            s.extend(adam.to_state());
        }
        Some(s)
    }

    fn load_state(&mut self, state: &[f64]) -> Result<()> {
        let n = self.policy.num_params();
        if state.len() < n {
            return Err(Error::Checkpoint(format!(
                "state has {} values, policy needs {n}",
                state.len()
            )));
        }
        self.policy.set_params(&state[..n])?;
        match &mut self.adam {
            Some(adam) => adam.load_state(&state[n..]),
            None if state.len() == n => Ok(()),
            None => Err(Error::Checkpoint(format!(
                "state has {} values, expected {n}",
                state.len()
            ))),
        }
    }
}

/// Evaluates candidates one episode each until the step budget is spent.
fn evaluate_until_budget(
    policy: &mut GaussianPolicy<f64>,
    env: &mut dyn Env<f64>,
    b: Budget,
    iteration: usize,
    mut next: impl FnMut(usize) -> Option<Vec<f64>>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, usize)> {
    let (mut samples, mut returns, mut steps) = (Vec::new(), Vec::new(), 0);
    while let Some(theta) = next(steps) {
        policy.set_params(&theta)?;
        let traj = rollout(
            env,
            &*policy,
            b.horizon,
            &mut trajectory_rng(b.seed, iteration, samples.len()),
        )?;
        steps += traj.len();
        returns.push(traj.total_reward());
        samples.push(theta);
    }
    Ok((samples, returns, steps))
}

struct CemLearner {
    cem: Cem<f64>,
    policy: GaussianPolicy<f64>,
    budget: Budget,
}

impl Learner for CemLearner {
    fn iterate(&mut self, env: &mut dyn Env<f64>, iteration: usize) -> Result<IterationOutcome> {
        let b = self.budget;
        let mut rng = search_rng(b.seed, iteration);
        let cem = &self.cem;
        let mut n = 0;
        let (samples, returns, steps) = evaluate_until_budget(&mut self.policy, env, b, iteration, |steps| {
            n += 1;
            (steps < b.steps || n <= 2).then(|| cem.sample(&mut rng))
        })?;
        self.cem.update(&samples, &returns)?;
        self.policy.set_params(&self.cem.mean)?;
        Ok(IterationOutcome {
            returns,
            steps,
            mean_kl: None,
        })
    }

    fn checkpoint(&self) -> (String, Vec<f64>) {
        (self.policy.descriptor(), self.cem.mean.clone())
    }

    fn state(&self) -> Option<Vec<f64>> {
        Some(self.cem.state())
    }

    fn load_state(&mut self, state: &[f64]) -> Result<()> {
        self.cem.load_state(state)?;
        self.policy.set_params(&self.cem.mean)
    }
}

struct CmaEsLearner {
    cma: CmaEs,
    policy: GaussianPolicy<f64>,
    budget: Budget,
}

impl Learner for CmaEsLearner {
    /// Runs whole generations until the step budget is spent.
    fn iterate(&mut self, env: &mut dyn Env<f64>, iteration: usize) -> Result<IterationOutcome> {
        let b = self.budget;
        let mut rng = search_rng(b.seed, iteration);
        let (mut all_returns, mut steps) = (Vec::new(), 0);
        while steps < b.steps {
            let lambda = self.cma.population();
            let cands: Vec<Vec<f64>> = (0..lambda).map(|_| self.cma.sample(&mut rng)).collect();
            let mut fitness = Vec::with_capacity(lambda);
            for c in &cands {
                self.policy.set_params(c)?;
                let idx = all_returns.len();
                let traj = rollout(
                    env,
                    &self.policy,
                    b.horizon,
                    &mut trajectory_rng(b.seed, iteration, idx),
                )?;
                steps += traj.len();
                fitness.push(traj.total_reward());
                all_returns.push(traj.total_reward());
            }
            self.cma.tell(&cands, &fitness)?;
        }
        self.policy.set_params(&self.cma.mean_as::<f64>())?;
        Ok(IterationOutcome {
            returns: all_returns,
            steps,
            mean_kl: None,
        })
    }

    fn checkpoint(&self) -> (String, Vec<f64>) {
        (self.policy.descriptor(), self.cma.mean_as())
    }

    fn state(&self) -> Option<Vec<f64>> {
        Some(self.cma.state())
    }

    fn load_state(&mut self, state: &[f64]) -> Result<()> {
        self.cma.load_state(state)?;
        self.policy.set_params(&self.cma.mean_as::<f64>())
    }
}

struct DdpgLearner {
    ddpg: Ddpg<f64>,
    budget: Budget,
}

impl Learner for DdpgLearner {
    fn iterate(&mut self, env: &mut dyn Env<f64>, iteration: usize) -> Result<IterationOutcome> {
        let b = self.budget;
        let mut rng = search_rng(b.seed, iteration);
        let (mut returns, mut steps) = (Vec::new(), 0);
        while steps < b.steps {
            let mut reset = trajectory_rng(b.seed, iteration, returns.len());
            let traj = self.ddpg.run_episode(env, b.horizon, true, &mut reset, &mut rng)?;
            if traj.is_empty() {
                return Err(Error::Numerical("episode produced no steps".into()));
            }
            steps += traj.len();
            returns.push(traj.total_reward());
        }
        Ok(IterationOutcome {
            returns,
            steps,
            mean_kl: None,
        })
    }

    fn checkpoint(&self) -> (String, Vec<f64>) {
        let a = &self.ddpg.actor;
        let hidden: Vec<String> = self.ddpg.config.actor_hidden.iter().map(|h| h.to_string()).collect();
        (
            format!(
                "deterministic obs={} act={} hidden={}",
                a.obs_dim(),
                a.action_dim(),
                hidden.join(",")
            ),
            a.params.clone(),
        )
    }

    /// The replay pool is not snapshotted; resuming replays from iteration 0.
    fn state(&self) -> Option<Vec<f64>> {
        None
    }

    fn load_state(&mut self, _: &[f64]) -> Result<()> {
        Err(Error::Config("DDPG runs cannot be restored from a state file".into()))
    }
}

/// Freshly initialized learner for `seed`; `env` supplies dimensions and bounds.
pub fn build_learner(exp: &Experiment, env: &dyn Env<f64>, seed: u64) -> Result<Box<dyn Learner>> {
    let p = &exp.protocol;
    let budget = Budget {
        seed,
        horizon: p.horizon,
        steps: p.sim_steps_per_iter,
        discount: p.discount,
    };
    let mut rng = init_rng(seed);
    let spec = &exp.algorithm;
    if let AlgorithmParams::Ddpg(cfg) = &spec.params {
        let (lower, upper) = env.action_bounds();
        let ddpg = Ddpg::new(env.observation_dim(), &lower, &upper, p.discount, cfg.clone(), &mut rng)?;
        return Ok(Box::new(DdpgLearner { ddpg, budget }));
    }
    let policy = GaussianPolicy::new(spec.policy.clone(), env.observation_dim(), env.action_dim(), &mut rng)?;
    Ok(match &spec.params {
        AlgorithmParams::Cem(cfg) => Box::new(CemLearner {
            cem: Cem::new(policy.params().to_vec(), cfg.clone())?,
            policy,
            budget,
        }),
        AlgorithmParams::CmaEs(cfg) => Box::new(CmaEsLearner {
            cma: CmaEs::new(policy.params(), cfg)?,
            policy,
            budget,
        }),
        params => Box::new(BatchLearner {
            adam: match params {
                AlgorithmParams::Reinforce {
                    learning_rate,
                    rule: StepRule::Adam,
                } => Some(Adam::new(policy.num_params(), *learning_rate)),
                _ => None,
            },
            params: params.clone(),
            baseline: LinearBaseline::new(env.observation_dim()),
            policy,
            budget,
            logs_kl: spec.id.logs_kl(),
        }),
    })
}
