//! TOML experiment configuration.
//!
//! ```toml
//! [task]
//! id = "cartpole_swingup"
//! wrappers = ["noisy_delayed"]   # limited_sensors, noisy_delayed, sysid
//! noise_sigma = 0.1
//! delay_frames = 3
//! [task.physics]
//! pole_length = 0.6
//!
//! [algorithm]
//! id = "trpo"
//! delta_kl = 0.05
//!
//! [protocol]
//! sim_steps_per_iter = 50000
//! num_iterations = 500
//! seeds = [0, 1, 2, 3, 4]
//!
//! [grid]
//! delta_kl = { low = 1e-3, high = 5.0, points = 8 }
//! ```
//!
//! Every key is optional. Protocol defaults depend on whether the task is
//! wrapped: 500 iterations at horizon 500 for bare tasks, 300 at horizon 100
//! otherwise.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algos::{CemConfig, CmaEsConfig, DdpgConfig, RepsConfig, RwrConfig, StepRule, TrustRegionConfig};
use crate::error::{Error, Result};
use crate::nn::PolicyArch;
use crate::tasks::{PhysicsParams, TaskKind};
use crate::wrappers::{NoiseDelaySpec, WrapperSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmId {
    Random,
    Reinforce,
    Tnpg,
    Rwr,
    Reps,
    Trpo,
    Cem,
    CmaEs,
    Ddpg,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 9] = [
        AlgorithmId::Random,
        AlgorithmId::Reinforce,
        AlgorithmId::Tnpg,
        AlgorithmId::Rwr,
        AlgorithmId::Reps,
        AlgorithmId::Trpo,
        AlgorithmId::Cem,
        AlgorithmId::CmaEs,
        AlgorithmId::Ddpg,
    ];

    pub fn id(self) -> &'static str {
        match self {
            AlgorithmId::Random => "random",
            AlgorithmId::Reinforce => "reinforce",
            AlgorithmId::Tnpg => "tnpg",
            AlgorithmId::Rwr => "rwr",
            AlgorithmId::Reps => "reps",
            AlgorithmId::Trpo => "trpo",
            AlgorithmId::Cem => "cem",
            AlgorithmId::CmaEs => "cmaes",
            AlgorithmId::Ddpg => "ddpg",
        }
    }

    /// Whether the metrics CSV carries the update's mean KL.
    pub fn logs_kl(self) -> bool {
        matches!(self, AlgorithmId::Reinforce | AlgorithmId::Tnpg | AlgorithmId::Trpo)
    }

    /// Hyperparameter keys accepted in `[algorithm]` besides `id`.
    pub fn keys(self) -> &'static [&'static str] {
        const POLICY: &[&str] = &["policy"];
        match self {
            AlgorithmId::Random => POLICY,
            AlgorithmId::Reinforce => &["policy", "learning_rate", "optimizer"],
            AlgorithmId::Tnpg | AlgorithmId::Trpo => &[
                "policy",
                "delta_kl",
                "cg_iters",
                "damping",
                "backtrack_ratio",
                "max_backtracks",
            ],
            AlgorithmId::Rwr => &["policy", "inner_steps", "inner_learning_rate"],
            AlgorithmId::Reps => &[
                "policy",
                "delta_kl",
                "dual_tolerance",
                "dual_max_iters",
                "inner_steps",
                "inner_learning_rate",
            ],
            AlgorithmId::Cem => &[
                "policy",
                "elite_fraction",
                "init_std",
                "extra_noise",
                "extra_noise_iters",
            ],
            AlgorithmId::CmaEs => &["policy", "sigma0", "population", "max_params"],
            AlgorithmId::Ddpg => &[
                "batch_size",
                "replay_capacity",
                "actor_learning_rate",
                "critic_learning_rate",
                "critic_weight_decay",
                "tau",
                "reward_scale",
                "warmup_steps",
                "ou_theta",
                "ou_sigma",
                "actor_hidden",
                "critic_hidden",
            ],
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL.iter().copied().find(|a| a.id() == s).ok_or_else(|| {
            let valid: Vec<_> = AlgorithmId::ALL.iter().map(|a| a.id()).collect();
            Error::Config(format!(
                "unknown algorithm `{s}`; valid algorithms: {}",
                valid.join(", ")
            ))
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsOverrides {
    pub gravity: Option<f64>,
    pub cart_mass: Option<f64>,
    pub pole_mass: Option<f64>,
    pub pole2_mass: Option<f64>,
    pub pole_length: Option<f64>,
    pub pole2_length: Option<f64>,
    pub link_inertia: Option<f64>,
    pub force_limit: Option<f64>,
    pub valley_width: Option<f64>,
    pub valley_height: Option<f64>,
    pub dt: Option<f64>,
    pub frame_skip: Option<usize>,
    pub init_noise: Option<f64>,
}

impl PhysicsOverrides {
    pub fn apply(&self, p: &mut PhysicsParams<f64>) {
        let pairs = [
            (self.gravity, &mut p.gravity),
            (self.cart_mass, &mut p.cart_mass),
            (self.pole_mass, &mut p.pole_mass),
            (self.pole2_mass, &mut p.pole2_mass),
            (self.pole_length, &mut p.pole_length),
            (self.pole2_length, &mut p.pole2_length),
            (self.link_inertia, &mut p.link_inertia),
            (self.force_limit, &mut p.force_limit),
            (self.valley_width, &mut p.valley_width),
            (self.valley_height, &mut p.valley_height),
            (self.dt, &mut p.dt),
            (self.init_noise, &mut p.init_noise),
        ];
        for (v, slot) in pairs {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(k) = self.frame_skip {
            p.frame_skip = k;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    #[serde(default = "default_task")]
    pub id: String,
    #[serde(default)]
    pub wrappers: Vec<String>,
    pub noise_sigma: Option<f64>,
    pub delay_frames: Option<usize>,
    #[serde(default)]
    pub physics: PhysicsOverrides,
}

fn default_task() -> String {
    TaskKind::CartPoleBalance.id().to_string()
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            id: default_task(),
            wrappers: Vec::new(),
            noise_sigma: None,
            delay_frames: None,
            physics: PhysicsOverrides::default(),
        }
    }
}

/// Flat `[algorithm]` table. Keys that do not apply to `id` are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    #[serde(default = "default_algorithm")]
    pub id: String,
    /// Policy architecture, e.g. `mlp(100:tanh,50:tanh,25:identity)` or `lstm(32)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// REINFORCE update rule, `adam` or `sgd`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backtrack_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_backtracks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elite_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra_noise_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_params: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actor_learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_weight_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ou_theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ou_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actor_hidden: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_hidden: Option<Vec<usize>>,
}

fn default_algorithm() -> String {
    AlgorithmId::Trpo.id().to_string()
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self::new(AlgorithmId::Trpo)
    }
}

impl AlgorithmSection {
    pub fn new(id: AlgorithmId) -> Self {
        toml::from_str(&format!("id = \"{id}\"")).expect("id-only section")
    }

    /// Names of the hyperparameters set in this section.
    pub fn set_keys(&self) -> Vec<String> {
        match toml::Value::try_from(self) {
            Ok(toml::Value::Table(t)) => t.keys().filter(|k| *k != "id").cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// Returns a copy with `key` set to `value`, type-checked through serde.
    pub fn with_value(&self, key: &str, value: toml::Value) -> Result<Self> {
        let mut table = match toml::Value::try_from(self) {
            Ok(toml::Value::Table(t)) => t,
            _ => return Err(Error::Config("cannot serialize [algorithm]".into())),
        };
        table.insert(key.to_string(), value);
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("bad value for `{key}`: {e}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub sim_steps_per_iter: Option<usize>,
    pub num_iterations: Option<usize>,
    pub horizon: Option<usize>,
    pub discount: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    /// Policy checkpoint period in iterations; the final iteration is always saved.
    pub checkpoint_every: Option<usize>,
    /// Off by default so that reruns produce identical files.
    #[serde(default)]
    pub record_wall_time: bool,
}

/// One grid axis: explicit values or a log-spaced range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridAxis {
    Values(Vec<toml::Value>),
    LogRange { low: f64, high: f64, points: usize },
}

impl GridAxis {
    pub fn values(&self) -> Result<Vec<toml::Value>> {
        match self {
            GridAxis::Values(v) if v.is_empty() => Err(Error::Config("empty grid axis".into())),
            GridAxis::Values(v) => Ok(v.clone()),
            GridAxis::LogRange { low, high, points } => Ok(log_space(*low, *high, *points)?
                .into_iter()
                .map(toml::Value::Float)
                .collect()),
        }
    }
}

/// `points` values from `low` to `high` inclusive, evenly spaced in log scale.
pub fn log_space(low: f64, high: f64, points: usize) -> Result<Vec<f64>> {
    if !(low > 0.0 && high >= low && high.is_finite()) || points == 0 {
        return Err(Error::Config(format!(
            "log range needs 0 < low <= high and points >= 1, got [{low}, {high}] x {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![low]);
    }
    let (a, b) = (low.log10(), high.log10());
    Ok((0..points)
        .map(|i| match i {
            0 => low,
            i if i == points - 1 => high,
            i => 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64),
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub task: TaskSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    /// Axes keyed by `[algorithm]` key; points enumerate in key order, last key fastest.
    #[serde(default)]
    pub grid: BTreeMap<String, GridAxis>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Cartesian product of the grid axes as `(key, value)` assignments.
    pub fn grid_points(&self) -> Result<Vec<Vec<(String, toml::Value)>>> {
        let mut points = vec![Vec::new()];
        for (key, axis) in &self.grid {
            let values = axis.values()?;
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for v in &values {
                    let mut q: Vec<(String, toml::Value)> = p.clone();
                    q.push((key.clone(), v.clone()));
                    next.push(q);
                }
            }
            points = next;
        }
        Ok(points)
    }

    /// Copy with the given algorithm assignments applied.
    pub fn with_assignments(&self, assignments: &[(String, toml::Value)]) -> Result<Self> {
        let mut out = self.clone();
        for (k, v) in assignments {
            out.algorithm = out.algorithm.with_value(k, v.clone())?;
        }
        out.grid.clear();
        Ok(out)
    }

    pub fn resolve(&self) -> Result<Experiment> {
        let kind: TaskKind = self.task.id.parse()?;
        let mut physics = PhysicsParams::for_task(kind);
        self.task.physics.apply(&mut physics);

        let mut wrappers = Vec::new();
        let mut noise_used = false;
        for w in &self.task.wrappers {
            wrappers.push(match w.as_str() {
                "limited_sensors" => WrapperSpec::LimitedSensors,
                "noisy_delayed" => {
                    noise_used = true;
                    let d = NoiseDelaySpec::default();
                    WrapperSpec::NoisyDelayed(NoiseDelaySpec {
                        noise_sigma: self.task.noise_sigma.unwrap_or(d.noise_sigma),
                        delay_frames: self.task.delay_frames.unwrap_or(d.delay_frames),
                    })
                }
                "sysid" => WrapperSpec::SysId(None),
                other => {
                    return Err(Error::Config(format!(
                        "unknown wrapper `{other}`; valid wrappers: limited_sensors, noisy_delayed, sysid"
                    )))
                }
            });
        }
        if !noise_used && (self.task.noise_sigma.is_some() || self.task.delay_frames.is_some()) {
            return Err(Error::Config(
                "noise_sigma/delay_frames require the noisy_delayed wrapper".into(),
            ));
        }

        let mut algorithm = self.resolve_algorithm(kind)?;
        let po = !wrappers.is_empty();
        let p = &self.protocol;
        let protocol = Protocol {
            sim_steps_per_iter: p.sim_steps_per_iter.unwrap_or(50_000),
            num_iterations: p.num_iterations.unwrap_or(if po { 300 } else { 500 }),
            horizon: p.horizon.unwrap_or(if po { 100 } else { 500 }),
            discount: p.discount.unwrap_or(0.99),
            seeds: p.seeds.clone().unwrap_or_else(|| (0..5).collect()),
            checkpoint_every: p.checkpoint_every.unwrap_or(10),
            record_wall_time: p.record_wall_time,
        };
        protocol.validate()?;
        if let AlgorithmParams::Cem(c) = &mut algorithm.params {
            c.extra_noise_iters = self.algorithm.extra_noise_iters.unwrap_or(protocol.num_iterations);
        }
        let label = std::iter::once(kind.id())
            .chain(wrappers.iter().map(|w| w.id()))
            .collect::<Vec<_>>()
            .join("+");
        Ok(Experiment {
            task: kind,
            task_label: label,
            wrappers,
            physics,
            algorithm,
            protocol,
        })
    }

    fn resolve_algorithm(&self, kind: TaskKind) -> Result<AlgorithmSpec> {
        let a = &self.algorithm;
        let id: AlgorithmId = a.id.parse()?;
        for k in a.set_keys() {
            if !id.keys().contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "`{k}` does not apply to {id}; accepted keys: {}",
                    id.keys().join(", ")
                )));
            }
        }
        let policy = match &a.policy {
            Some(s) => s.parse()?,
            None => PolicyArch::default_mlp(),
        };
        let d = |v: Option<f64>, default: f64| v.unwrap_or(default);
        let params = match id {
            AlgorithmId::Random => AlgorithmParams::Random,
            AlgorithmId::Reinforce => AlgorithmParams::Reinforce {
                learning_rate: d(a.learning_rate, 5e-3),
                rule: a.optimizer.as_deref().unwrap_or("adam").parse()?,
            },
            AlgorithmId::Tnpg | AlgorithmId::Trpo => {
                let delta = match (id, kind) {
                    (AlgorithmId::Tnpg, TaskKind::DoublePendulum) => 3e-2,
                    (AlgorithmId::Trpo, TaskKind::DoublePendulum) => 1e-3,
                    _ => 5e-2,
                };
                let mut tr = TrustRegionConfig::new(d(a.delta_kl, delta));
                tr.cg_iters = a.cg_iters.unwrap_or(tr.cg_iters);
                tr.damping = d(a.damping, tr.damping);
                tr.backtrack_ratio = d(a.backtrack_ratio, tr.backtrack_ratio);
                tr.max_backtracks = a.max_backtracks.unwrap_or(tr.max_backtracks);
                tr.validate()?;
                if id == AlgorithmId::Tnpg {
                    AlgorithmParams::Tnpg(tr)
                } else {
                    AlgorithmParams::Trpo(tr)
                }
            }
            AlgorithmId::Rwr => {
                let mut c = RwrConfig::default();
                c.inner_steps = a.inner_steps.unwrap_or(c.inner_steps);
                c.inner_learning_rate = d(a.inner_learning_rate, c.inner_learning_rate);
                AlgorithmParams::Rwr(c)
            }
            AlgorithmId::Reps => {
                let delta = if kind == TaskKind::DoublePendulum { 0.8 } else { 1e-2 };
                let mut c = RepsConfig::new(d(a.delta_kl, delta));
                c.dual_tolerance = d(a.dual_tolerance, c.dual_tolerance);
                c.dual_max_iters = a.dual_max_iters.unwrap_or(c.dual_max_iters);
                c.inner_steps = a.inner_steps.unwrap_or(c.inner_steps);
                c.inner_learning_rate = d(a.inner_learning_rate, c.inner_learning_rate);
                if !(c.delta_kl > 0.0) {
                    return Err(Error::Config("REPS delta_kl must be positive".into()));
                }
                AlgorithmParams::Reps(c)
            }
            AlgorithmId::Cem => {
                let mut c = CemConfig::default();
                c.extra_noise = if kind == TaskKind::DoublePendulum { 0.1 } else { 1e-2 };
                c.elite_fraction = d(a.elite_fraction, c.elite_fraction);
                c.init_std = d(a.init_std, c.init_std);
                c.extra_noise = d(a.extra_noise, c.extra_noise);
                c.extra_noise_iters = a.extra_noise_iters.unwrap_or(c.extra_noise_iters);
                c.validate()?;
                AlgorithmParams::Cem(c)
            }
            AlgorithmId::CmaEs => {
                let mut c = CmaEsConfig::default();
                c.sigma0 = d(a.sigma0, if kind == TaskKind::CartPoleSwingUp { 1e3 } else { 0.3 });
                c.population = a.population.or(c.population);
                c.max_params = a.max_params.unwrap_or(c.max_params);
                if !(c.sigma0 > 0.0) {
                    return Err(Error::Config("CMA-ES sigma0 must be positive".into()));
                }
                AlgorithmParams::CmaEs(c)
            }
            AlgorithmId::Ddpg => {
                let mut c = DdpgConfig::default();
                c.batch_size = a.batch_size.unwrap_or(c.batch_size);
                c.replay_capacity = a.replay_capacity.unwrap_or(c.replay_capacity);
                c.actor_learning_rate = d(a.actor_learning_rate, c.actor_learning_rate);
                c.critic_learning_rate = d(a.critic_learning_rate, c.critic_learning_rate);
                c.critic_weight_decay = d(a.critic_weight_decay, c.critic_weight_decay);
                c.tau = d(a.tau, c.tau);
                c.reward_scale = d(a.reward_scale, c.reward_scale);
                c.warmup_steps = a.warmup_steps.unwrap_or(c.warmup_steps);
                c.ou_theta = d(a.ou_theta, c.ou_theta);
                c.ou_sigma = d(a.ou_sigma, c.ou_sigma);
                c.actor_hidden = a.actor_hidden.clone().unwrap_or(c.actor_hidden);
                c.critic_hidden = a.critic_hidden.clone().unwrap_or(c.critic_hidden);
                AlgorithmParams::Ddpg(c)
            }
        };
        Ok(AlgorithmSpec { id, policy, params })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AlgorithmParams {
    Random,
    Reinforce { learning_rate: f64, rule: StepRule },
    Tnpg(TrustRegionConfig<f64>),
    Trpo(TrustRegionConfig<f64>),
    Rwr(RwrConfig<f64>),
    Reps(RepsConfig<f64>),
    Cem(CemConfig<f64>),
    CmaEs(CmaEsConfig),
    Ddpg(DdpgConfig<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmSpec {
    pub id: AlgorithmId,
    /// Gaussian policy architecture; unused by DDPG.
    pub policy: PolicyArch,
    pub params: AlgorithmParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Protocol {
    pub sim_steps_per_iter: usize,
    pub num_iterations: usize,
    pub horizon: usize,
    pub discount: f64,
    pub seeds: Vec<u64>,
    pub checkpoint_every: usize,
    pub record_wall_time: bool,
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.sim_steps_per_iter == 0 || self.num_iterations == 0 || self.horizon == 0 {
            return Err(Error::Config(
                "sim_steps_per_iter, num_iterations and horizon must be positive".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!(
                "discount must lie in (0, 1], got {}",
                self.discount
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

/// A fully resolved, validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub task: TaskKind,
    /// Task id joined with wrapper ids by `+`, used as the results directory name.
    pub task_label: String,
    pub wrappers: Vec<WrapperSpec>,
    pub physics: PhysicsParams<f64>,
    pub algorithm: AlgorithmSpec,
    pub protocol: Protocol,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let e = ExperimentConfig::parse("").unwrap().resolve().unwrap();
        assert_eq!(e.task, TaskKind::CartPoleBalance);
        assert_eq!(e.algorithm.id, AlgorithmId::Trpo);
        assert_eq!(e.protocol.sim_steps_per_iter, 50_000);
        assert_eq!(e.protocol.num_iterations, 500);
        assert_eq!(e.protocol.horizon, 500);
        assert_eq!(e.protocol.discount, 0.99);
        assert_eq!(e.protocol.seeds.len(), 5);
        assert_eq!(e.task_label, "cartpole_balance");
    }

    #[test]
    fn wrapped_task_uses_short_protocol() {
        let c = "[task]\nid = \"mountain_car\"\nwrappers = [\"noisy_delayed\"]\ndelay_frames = 2\n";
        let e = ExperimentConfig::parse(c).unwrap().resolve().unwrap();
        assert_eq!(e.protocol.num_iterations, 300);
        assert_eq!(e.protocol.horizon, 100);
        assert_eq!(e.task_label, "mountain_car+noisy_delayed");
        assert_eq!(
            e.wrappers,
            vec![WrapperSpec::NoisyDelayed(NoiseDelaySpec {
                noise_sigma: 0.1,
                delay_frames: 2
            })]
        );
    }

    #[test]
    fn tuned_defaults() {
        let get = |task: &str, algo: &str| {
            let c = format!("[task]\nid = \"{task}\"\n[algorithm]\nid = \"{algo}\"\n");
            ExperimentConfig::parse(&c).unwrap().resolve().unwrap().algorithm.params
        };
        assert_eq!(
            get("cartpole_swingup", "reinforce"),
            AlgorithmParams::Reinforce {
                learning_rate: 5e-3,
                rule: StepRule::Adam
            }
        );
        match get("double_pendulum", "trpo") {
            AlgorithmParams::Trpo(c) => assert_eq!(c.delta_kl, 1e-3),
            other => panic!("{other:?}"),
        }
        match get("cartpole_swingup", "reps") {
            AlgorithmParams::Reps(c) => assert_eq!(c.delta_kl, 1e-2),
            other => panic!("{other:?}"),
        }
        match get("cartpole_swingup", "cmaes") {
            AlgorithmParams::CmaEs(c) => assert_eq!(c.sigma0, 1e3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_ids_list_valid_choices() {
        let e = ExperimentConfig::parse("[algorithm]\nid = \"ppo\"\n")
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(e.to_string().contains("trpo") && e.to_string().contains("cmaes"));
        let e = ExperimentConfig::parse("[task]\nid = \"walker\"\n")
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(e.to_string().contains("cartpole_balance"));
    }

    #[test]
    fn misplaced_and_unknown_keys_rejected() {
        assert!(
            ExperimentConfig::parse("[algorithm]\nid = \"reinforce\"\ndelta_kl = 0.1\n")
                .unwrap()
                .resolve()
                .is_err()
        );
        assert!(ExperimentConfig::parse("[protocol]\nhorizn = 5\n").is_err());
        assert!(ExperimentConfig::parse("[protocol]\nseeds = []\n")
            .unwrap()
            .resolve()
            .is_err());
        assert!(
            ExperimentConfig::parse("[algorithm]\nid = \"trpo\"\noptimizer = \"sgd\"\n")
                .unwrap()
                .resolve()
                .is_err()
        );
    }

    #[test]
    fn reinforce_optimizer_choice() {
        let rule = |c: &str| match ExperimentConfig::parse(c)
            .unwrap()
            .resolve()
            .map(|e| e.algorithm.params)
        {
            Ok(AlgorithmParams::Reinforce { rule, .. }) => Ok(rule),
            Ok(other) => panic!("{other:?}"),
            Err(e) => Err(e.to_string()),
        };
        assert_eq!(
            rule("[algorithm]\nid = \"reinforce\"\noptimizer = \"sgd\"\n"),
            Ok(StepRule::Sgd)
        );
        let e = rule("[algorithm]\nid = \"reinforce\"\noptimizer = \"rmsprop\"\n").unwrap_err();
        assert!(e.contains("adam"));
    }

    #[test]
    fn physics_overrides_apply() {
        let c = "[task.physics]\npole_length = 0.7\nframe_skip = 2\n";
        let e = ExperimentConfig::parse(c).unwrap().resolve().unwrap();
        assert_eq!(e.physics.pole_length, 0.7);
        assert_eq!(e.physics.frame_skip, 2);
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(1e-4, 1e-1, 4).unwrap();
        assert_eq!(v[0], 1e-4);
        assert_eq!(v[3], 1e-1);
        assert!((v[1] - 1e-3).abs() < 1e-15 && (v[2] - 1e-2).abs() < 1e-14);
        assert!(log_space(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn grid_points_in_order() {
        let c = "[algorithm]\nid = \"cem\"\n[grid]\nextra_noise = [0.1, 0.2]\ninit_std = { low = 0.1, high = 10.0, points = 3 }\n";
        let cfg = ExperimentConfig::parse(c).unwrap();
        let pts = cfg.grid_points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1][0].1, toml::Value::Float(0.1));
        assert_eq!(pts[1][1].1, toml::Value::Float(1.0));
        let e = cfg.with_assignments(&pts[5]).unwrap().resolve().unwrap();
        match e.algorithm.params {
            AlgorithmParams::Cem(c) => assert_eq!((c.extra_noise, c.init_std), (0.2, 10.0)),
            other => panic!("{other:?}"),
        }
        assert!(cfg
            .with_assignments(&[("population".into(), toml::Value::Float(0.5))])
            .is_err());
    }
}
