//! Partially observable variants of the basic tasks, as composable wrappers.
//!
//! Wrappers draw their own randomness from generators derived from the
//! rollout generator at reset, so a wrapper that is configured as a no-op
//! leaves the wrapped task's random stream bit-identical.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::mdp::{Env, StepResult};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tasks::{PhysicsParams, TaskKind};

/// Sub-stream used for observation noise.
pub const NOISE_STREAM: u64 = 0x6e_6f69_7365;
/// Sub-stream used for system-identification parameter draws.
pub const SYSID_STREAM: u64 = 0x73_7973_6964;

/// Projects `full` onto `kept`.
pub fn limited_sensor_observe<T: Scalar>(full: &[T], kept: &[usize]) -> Result<Vec<T>> {
    validate_kept(kept, full.len())?;
    Ok(kept.iter().map(|&i| full[i]).collect())
}

fn validate_kept(kept: &[usize], dim: usize) -> Result<()> {
    if kept.is_empty() {
        return Err(Error::Config(
            "limited sensors must keep at least one coordinate".into(),
        ));
    }
    if kept.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("kept indices must be strictly increasing".into()));
    }
    if let Some(&bad) = kept.iter().find(|&&i| i >= dim) {
        return Err(Error::Config(format!(
            "kept index {bad} out of range for observation of size {dim}"
        )));
    }
    Ok(())
}

/// Exposes only a subset of the observation coordinates.
#[derive(Clone)]
pub struct LimitedSensors<T: Scalar> {
    inner: Box<dyn Env<T>>,
    kept: Vec<usize>,
}

impl<T: Scalar> LimitedSensors<T> {
    pub fn new(inner: Box<dyn Env<T>>, kept: Vec<usize>) -> Result<Self> {
        validate_kept(&kept, inner.observation_dim())?;
        Ok(Self { inner, kept })
    }

    fn project(&self, full: &[T]) -> Vec<T> {
        self.kept.iter().map(|&i| full[i]).collect()
    }
}

impl<T: Scalar> Env<T> for LimitedSensors<T> {
    fn name(&self) -> String {
        format!("limited_sensors({})", self.inner.name())
    }

    fn observation_dim(&self) -> usize {
        self.kept.len()
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn action_bounds(&self) -> (Vec<T>, Vec<T>) {
        self.inner.action_bounds()
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<T> {
        let full = self.inner.reset(rng);
        self.project(&full)
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        let mut r = self.inner.step(action)?;
        r.observation = self.project(&r.observation);
        Ok(r)
    }

    fn physics(&self) -> &PhysicsParams<T> {
        self.inner.physics()
    }

    fn set_physics(&mut self, physics: PhysicsParams<T>) {
        self.inner.set_physics(physics);
    }

    fn clone_box(&self) -> Box<dyn Env<T>> {
        Box::new(self.clone())
    }
}

/// Observation noise level and action delay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseDelaySpec {
    pub noise_sigma: f64,
    pub delay_frames: usize,
}

impl Default for NoiseDelaySpec {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            delay_frames: 3,
        }
    }
}

/// FIFO of submitted actions that have not taken effect yet.
#[derive(Clone, Debug)]
pub struct ActionQueue<T> {
    pending: VecDeque<Vec<T>>,
    fill_action: Vec<T>,
    delay: usize,
}

impl<T: Scalar> ActionQueue<T> {
    pub fn new(delay: usize, action_dim: usize) -> Self {
        let mut q = Self {
            pending: VecDeque::with_capacity(delay + 1),
            fill_action: vec![T::zero(); action_dim],
            delay,
        };
        q.reset();
        q
    }

    pub fn reset(&mut self) {
        self.pending.clear();
        for _ in 0..self.delay {
            self.pending.push_back(self.fill_action.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Enqueues `action` and returns the action that takes effect now.
    pub fn push_pop(&mut self, action: Vec<T>) -> Vec<T> {
        self.pending.push_back(action);
        self.pending.pop_front().expect("queue holds at least the new action")
    }
}

/// Adds Gaussian observation noise and delays actions by a fixed number of control steps.
#[derive(Clone)]
pub struct NoisyDelayed<T: Scalar> {
    inner: Box<dyn Env<T>>,
    sigma: T,
    queue: ActionQueue<T>,
    noise_rng: SeededRng,
}

impl<T: Scalar> NoisyDelayed<T> {
    pub fn new(inner: Box<dyn Env<T>>, spec: NoiseDelaySpec) -> Result<Self> {
        if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be a non-negative number".into()));
        }
        let queue = ActionQueue::new(spec.delay_frames, inner.action_dim());
        Ok(Self {
            inner,
            sigma: T::lit(spec.noise_sigma),
            queue,
            noise_rng: SeededRng::new(0, NOISE_STREAM),
        })
    }

    fn corrupt(&mut self, obs: &mut [T]) {
        if self.sigma == T::zero() {
            return;
        }
        for v in obs {
            *v += self.sigma * self.noise_rng.normal::<T>();
        }
    }
}

impl<T: Scalar> Env<T> for NoisyDelayed<T> {
    fn name(&self) -> String {
        format!("noisy_delayed({})", self.inner.name())
    }

    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn action_bounds(&self) -> (Vec<T>, Vec<T>) {
        self.inner.action_bounds()
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<T> {
        self.noise_rng = rng.derive(NOISE_STREAM);
        self.queue.reset();
        let mut obs = self.inner.reset(rng);
        self.corrupt(&mut obs);
        obs
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        let effective = self.queue.push_pop(action.to_vec());
        let mut r = self.inner.step(&effective)?;
        self.corrupt(&mut r.observation);
        Ok(r)
    }

    fn physics(&self) -> &PhysicsParams<T> {
        self.inner.physics()
    }

    fn set_physics(&mut self, physics: PhysicsParams<T>) {
        self.inner.set_physics(physics);
    }

    fn clone_box(&self) -> Box<dyn Env<T>> {
        Box::new(self.clone())
    }
}

/// A physical constant that system identification can randomize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhysicsField {
    Gravity,
    CartMass,
    PoleMass,
    Pole2Mass,
    PoleLength,
    Pole2Length,
    ValleyWidth,
    ValleyHeight,
}

impl PhysicsField {
    pub fn get<T: Scalar>(self, p: &PhysicsParams<T>) -> T {
        match self {
            PhysicsField::Gravity => p.gravity,
            PhysicsField::CartMass => p.cart_mass,
            PhysicsField::PoleMass => p.pole_mass,
            PhysicsField::Pole2Mass => p.pole2_mass,
            PhysicsField::PoleLength => p.pole_length,
            PhysicsField::Pole2Length => p.pole2_length,
            PhysicsField::ValleyWidth => p.valley_width,
            PhysicsField::ValleyHeight => p.valley_height,
        }
    }

    pub fn set<T: Scalar>(self, p: &mut PhysicsParams<T>, v: T) {
        let slot = match self {
            PhysicsField::Gravity => &mut p.gravity,
            PhysicsField::CartMass => &mut p.cart_mass,
            PhysicsField::PoleMass => &mut p.pole_mass,
            PhysicsField::Pole2Mass => &mut p.pole2_mass,
            PhysicsField::PoleLength => &mut p.pole_length,
            PhysicsField::Pole2Length => &mut p.pole2_length,
            PhysicsField::ValleyWidth => &mut p.valley_width,
            PhysicsField::ValleyHeight => &mut p.valley_height,
        };
        *slot = v;
    }
}

/// Multiplicative range for one randomized parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SysIdFactor {
    pub field: PhysicsField,
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SysIdSpec {
    pub factors: Vec<SysIdFactor>,
}

impl SysIdSpec {
    pub fn new(factors: Vec<SysIdFactor>) -> Result<Self> {
        for f in &factors {
            if !(f.low > 0.0 && f.low <= f.high && f.high.is_finite()) {
                return Err(Error::Config(format!(
                    "sysid range for {:?} must satisfy 0 < low <= high, got [{}, {}]",
                    f.field, f.low, f.high
                )));
            }
        }
        Ok(Self { factors })
    }

    /// Default randomization for each task.
    pub fn for_task(kind: TaskKind) -> Self {
        let f = |field, low, high| SysIdFactor { field, low, high };
        let factors = match kind {
            TaskKind::CartPoleBalance | TaskKind::CartPoleSwingUp => {
                vec![f(PhysicsField::PoleLength, 0.5, 1.5)]
            }
            TaskKind::MountainCar => vec![f(PhysicsField::ValleyWidth, 0.75, 1.25)],
            TaskKind::AcrobotSwingUp => vec![
                f(PhysicsField::PoleLength, 0.5, 1.5),
                f(PhysicsField::Pole2Length, 0.5, 1.5),
            ],
            TaskKind::DoublePendulum => vec![
                f(PhysicsField::PoleLength, 0.83, 1.67),
                f(PhysicsField::Pole2Length, 0.83, 1.67),
            ],
        };
        Self { factors }
    }
}

/// Draws one episode's physical parameters around `base`.
pub fn sysid_sample<T: Scalar>(spec: &SysIdSpec, base: &PhysicsParams<T>, rng: &mut SeededRng) -> PhysicsParams<T> {
    let mut p = base.clone();
    for f in &spec.factors {
        let u: f64 = rng.uniform_in(f.low, f.high);
        f.field.set(&mut p, f.field.get(base) * T::lit(u));
    }
    p
}

/// Resamples physical parameters at every reset; they are never observed.
#[derive(Clone)]
pub struct SysId<T: Scalar> {
    inner: Box<dyn Env<T>>,
    base: PhysicsParams<T>,
    spec: SysIdSpec,
}

impl<T: Scalar> SysId<T> {
    pub fn new(inner: Box<dyn Env<T>>, spec: SysIdSpec) -> Self {
        let base = inner.physics().clone();
        Self { inner, base, spec }
    }

    pub fn base_physics(&self) -> &PhysicsParams<T> {
        &self.base
    }
}

impl<T: Scalar> Env<T> for SysId<T> {
    fn name(&self) -> String {
        format!("sysid({})", self.inner.name())
    }

    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn action_bounds(&self) -> (Vec<T>, Vec<T>) {
        self.inner.action_bounds()
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<T> {
        let mut draw = rng.derive(SYSID_STREAM);
        let p = sysid_sample(&self.spec, &self.base, &mut draw);
        self.inner.set_physics(p);
        self.inner.reset(rng)
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        self.inner.step(action)
    }

    /// Parameters in effect for the current episode.
    fn physics(&self) -> &PhysicsParams<T> {
        self.inner.physics()
    }

    /// Replaces the nominal parameters that episodes are drawn around.
    fn set_physics(&mut self, physics: PhysicsParams<T>) {
        self.base = physics.clone();
        self.inner.set_physics(physics);
    }

    fn clone_box(&self) -> Box<dyn Env<T>> {
        Box::new(self.clone())
    }
}

/// One partial-observability transformation, as named in experiment configs.
#[derive(Clone, Debug, PartialEq)]
pub enum WrapperSpec {
    LimitedSensors,
    NoisyDelayed(NoiseDelaySpec),
    SysId(Option<SysIdSpec>),
}

impl WrapperSpec {
    pub fn id(&self) -> &'static str {
        match self {
            WrapperSpec::LimitedSensors => "limited_sensors",
            WrapperSpec::NoisyDelayed(_) => "noisy_delayed",
            WrapperSpec::SysId(_) => "sysid",
        }
    }

    pub fn wrap<T: Scalar>(&self, kind: TaskKind, env: Box<dyn Env<T>>) -> Result<Box<dyn Env<T>>> {
        Ok(match self {
            WrapperSpec::LimitedSensors => {
                // Positional indices refer to the base observation layout.
                Box::new(LimitedSensors::new(env, kind.positional_indices())?)
            }
            WrapperSpec::NoisyDelayed(spec) => Box::new(NoisyDelayed::new(env, *spec)?),
            WrapperSpec::SysId(spec) => {
                let spec = spec.clone().unwrap_or_else(|| SysIdSpec::for_task(kind));
                Box::new(SysId::new(env, spec))
            }
        })
    }
}

/// Builds `kind` and applies `wrappers` inside-out (first entry wraps the bare task).
pub fn build_env<T: Scalar>(
    kind: TaskKind,
    physics: PhysicsParams<T>,
    wrappers: &[WrapperSpec],
) -> Result<Box<dyn Env<T>>> {
    let mut env = kind.build(physics)?;
    for w in wrappers {
        env = w.wrap(kind, env)?;
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{rollout, Actor};

    fn cartpole() -> Box<dyn Env<f64>> {
        TaskKind::CartPoleBalance
            .build(PhysicsParams::for_task(TaskKind::CartPoleBalance))
            .unwrap()
    }

    struct Scripted(Vec<f64>);

    impl Actor<f64> for Scripted {
        type Memory = usize;
        fn action_dim(&self) -> usize {
            1
        }
        fn start(&self) -> usize {
            0
        }
        fn act(&self, t: &mut usize, _: &[f64], _: &mut SeededRng) -> Vec<f64> {
            let a = self.0[*t % self.0.len()];
            *t += 1;
            vec![a]
        }
    }

    #[test]
    fn limited_projection() {
        let full = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(limited_sensor_observe(&full, &[0, 1]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(limited_sensor_observe(&full, &[0, 1, 2, 3]).unwrap(), full.to_vec());
        assert!(limited_sensor_observe(&full, &[]).is_err());
        assert!(limited_sensor_observe(&full, &[1, 0]).is_err());
        assert!(limited_sensor_observe(&full, &[4]).is_err());
    }

    #[test]
    fn limited_sensors_drop_velocities() {
        let mut env = LimitedSensors::new(cartpole(), vec![0, 1]).unwrap();
        let mut base = cartpole();
        let mut r1 = SeededRng::new(1, 0);
        let mut r2 = SeededRng::new(1, 0);
        let o = env.reset(&mut r1);
        let full = base.reset(&mut r2);
        assert_eq!(o, full[..2].to_vec());
        let s = env.step(&[1.0]).unwrap();
        let b = base.step(&[1.0]).unwrap();
        assert_eq!(s.observation, b.observation[..2].to_vec());
        assert_eq!(s.reward, b.reward);
    }

    #[test]
    fn queue_keeps_delay_entries() {
        let mut q = ActionQueue::<f64>::new(3, 1);
        assert_eq!(q.len(), 3);
        let out: Vec<f64> = (1..=5).map(|i| q.push_pop(vec![i as f64])[0]).collect();
        assert_eq!(out, vec![0.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(q.len(), 3);
        q.reset();
        assert_eq!(q.push_pop(vec![9.0]), vec![0.0]);
    }

    #[test]
    fn identity_wrapper_is_bit_identical() {
        let spec = NoiseDelaySpec {
            noise_sigma: 0.0,
            delay_frames: 0,
        };
        let mut wrapped = NoisyDelayed::new(cartpole(), spec).unwrap();
        let mut base = cartpole();
        let actor = Scripted(vec![3.0, -2.0, 0.5]);
        let a = rollout(&mut wrapped, &actor, 200, &mut SeededRng::new(9, 1)).unwrap();
        let b = rollout(base.as_mut(), &actor, 200, &mut SeededRng::new(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_is_derived_gaussian_stream() {
        let spec = NoiseDelaySpec {
            noise_sigma: 0.1,
            delay_frames: 0,
        };
        let mut wrapped = NoisyDelayed::new(cartpole(), spec).unwrap();
        let mut base = cartpole();
        let mut rng = SeededRng::new(5, 2);
        let mut oracle = rng.derive(NOISE_STREAM);
        let mut base_rng = rng.clone();
        let o = wrapped.reset(&mut rng);
        let t = base.reset(&mut base_rng);
        for (noisy, clean) in o.iter().zip(&t) {
            assert_eq!(*noisy, clean + 0.1 * oracle.normal::<f64>());
        }
        for _ in 0..10 {
            let s = wrapped.step(&[1.0]).unwrap();
            let c = base.step(&[1.0]).unwrap();
            assert_eq!(s.reward, c.reward);
            for (noisy, clean) in s.observation.iter().zip(&c.observation) {
                assert_eq!(*noisy, clean + 0.1 * oracle.normal::<f64>());
            }
        }
    }

    #[test]
    fn sysid_ranges_and_constancy() {
        let spec = SysIdSpec::for_task(TaskKind::CartPoleBalance);
        let mut env = SysId::new(cartpole(), spec);
        let mut rng = SeededRng::new(2, 0);
        for _ in 0..200 {
            env.reset(&mut rng);
            let l = env.physics().pole_length;
            assert!((0.25..=0.75).contains(&l));
            for _ in 0..3 {
                env.step(&[0.0]).unwrap();
                assert_eq!(env.physics().pole_length, l);
            }
        }
        assert_eq!(env.base_physics().pole_length, 0.5);
    }

    #[test]
    fn degenerate_sysid_matches_base() {
        let spec = SysIdSpec::new(vec![SysIdFactor {
            field: PhysicsField::PoleLength,
            low: 1.0,
            high: 1.0,
        }])
        .unwrap();
        let mut env = SysId::new(cartpole(), spec);
        let mut base = cartpole();
        let actor = Scripted(vec![1.0, -1.0]);
        for seed in 0..3 {
            let a = rollout(&mut env, &actor, 50, &mut SeededRng::new(seed, 0)).unwrap();
            let b = rollout(base.as_mut(), &actor, 50, &mut SeededRng::new(seed, 0)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(SysIdSpec::new(vec![SysIdFactor {
            field: PhysicsField::PoleLength,
            low: 1.5,
            high: 0.5
        }])
        .is_err());
        let bad = NoiseDelaySpec {
            noise_sigma: -0.1,
            delay_frames: 0,
        };
        assert!(NoisyDelayed::new(cartpole(), bad).is_err());
    }

    #[test]
    fn wrappers_compose_inside_out() {
        let env = build_env(
            TaskKind::DoublePendulum,
            PhysicsParams::<f64>::for_task(TaskKind::DoublePendulum),
            &[
                WrapperSpec::SysId(None),
                WrapperSpec::NoisyDelayed(NoiseDelaySpec::default()),
                WrapperSpec::LimitedSensors,
            ],
        )
        .unwrap();
        assert_eq!(env.observation_dim(), 5);
        assert_eq!(env.name(), "limited_sensors(noisy_delayed(sysid(double_pendulum)))");
    }
}
