//! The five basic control tasks, integrated from closed-form equations of motion.
//!
//! Every task advances its state with fixed-step RK4 at `dt` seconds, taking
//! `frame_skip` integration steps per control action. Rewards and termination
//! are evaluated on the post-integration state.

mod acrobot;
mod cartpole;
mod double_pendulum;
mod mountain_car;

use std::fmt;
use std::str::FromStr;

pub use acrobot::{acrobot_energy, acrobot_step, acrobot_tip, Acrobot, AcrobotState};
pub use cartpole::{cartpole_balance_step, cartpole_swingup_step, CartPole, CartPoleMode, CartPoleState};
pub use double_pendulum::{
    double_pendulum_energy, double_pendulum_step, double_pendulum_tip, DoublePendulum, DoublePendulumState,
};
pub use mountain_car::{mountain_car_energy, mountain_car_step, valley_height, MountainCar, MountainCarState};

use crate::error::{Error, Result};
use crate::mdp::Env;
use crate::scalar::Scalar;

/// Physical constants of a task. Each task reads the subset it needs.
///
/// Lengths follow the task: the cart-pole uses `pole_length` as the pole's
/// half-length, the acrobot and double pendulum use full link lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicsParams<T> {
    pub gravity: T,
    pub cart_mass: T,
    pub pole_mass: T,
    pub pole2_mass: T,
    pub pole_length: T,
    pub pole2_length: T,
    /// Moment of inertia of each acrobot link about its centre of mass.
    pub link_inertia: T,
    /// Bound on |force| (N) or |torque| (N m) of the single action coordinate.
    pub force_limit: T,
    pub valley_width: T,
    pub valley_height: T,
    /// Integration step in seconds.
    pub dt: T,
    /// Integration steps per control step.
    pub frame_skip: usize,
    /// Half-width of the uniform perturbation added to each state coordinate at reset.
    pub init_noise: T,
}

impl<T: Scalar> PhysicsParams<T> {
    /// Default constants for `kind`.
    pub fn for_task(kind: TaskKind) -> Self {
        let l = T::lit;
        let base = Self {
            gravity: l(9.81),
            cart_mass: l(1.0),
            pole_mass: l(1.0),
            pole2_mass: l(1.0),
            pole_length: l(0.5),
            pole2_length: l(1.0),
            link_inertia: l(1.0),
            force_limit: l(10.0),
            valley_width: l(1.0),
            valley_height: l(1.0),
            dt: l(0.01),
            frame_skip: 5,
            init_noise: l(0.01),
        };
        match kind {
            TaskKind::CartPoleBalance | TaskKind::CartPoleSwingUp => base,
            TaskKind::MountainCar => Self {
                force_limit: l(2.0),
                ..base
            },
            TaskKind::AcrobotSwingUp => Self {
                pole_length: l(1.0),
                force_limit: l(1.0),
                frame_skip: 2,
                ..base
            },
            // The falling double pendulum reaches joint rates above 30 rad/s; a
            // finer inner step keeps RK4 energy drift below 1e-3.
            TaskKind::DoublePendulum => Self {
                pole_length: l(1.0),
                dt: l(0.005),
                frame_skip: 4,
                ..base
            },
        }
    }

    /// Duration of one control step in seconds.
    pub fn control_dt(&self) -> T {
        self.dt * T::lit(self.frame_skip as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gravity", self.gravity),
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("pole2_mass", self.pole2_mass),
            ("pole_length", self.pole_length),
            ("pole2_length", self.pole2_length),
            ("link_inertia", self.link_inertia),
            ("force_limit", self.force_limit),
            ("valley_width", self.valley_width),
            ("valley_height", self.valley_height),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Config(format!("physics parameter {name} must be positive")));
            }
        }
        if self.frame_skip == 0 {
            return Err(Error::Config("frame_skip must be at least 1".into()));
        }
        if !(self.init_noise >= T::zero()) {
            return Err(Error::Config("init_noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Identifier of a basic task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKind {
    CartPoleBalance,
    CartPoleSwingUp,
    MountainCar,
    AcrobotSwingUp,
    DoublePendulum,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::CartPoleBalance,
        TaskKind::CartPoleSwingUp,
        TaskKind::MountainCar,
        TaskKind::AcrobotSwingUp,
        TaskKind::DoublePendulum,
    ];

    pub fn id(self) -> &'static str {
        match self {
            TaskKind::CartPoleBalance => "cartpole_balance",
            TaskKind::CartPoleSwingUp => "cartpole_swingup",
            TaskKind::MountainCar => "mountain_car",
            TaskKind::AcrobotSwingUp => "acrobot_swingup",
            TaskKind::DoublePendulum => "double_pendulum",
        }
    }

    /// Indices of the positional coordinates of the full observation.
    pub fn positional_indices(self) -> Vec<usize> {
        match self {
            TaskKind::CartPoleBalance | TaskKind::CartPoleSwingUp => vec![0, 1],
            TaskKind::MountainCar => vec![0],
            TaskKind::AcrobotSwingUp => vec![0, 1],
            // cart position plus sine/cosine of both joint angles
            TaskKind::DoublePendulum => vec![0, 1, 2, 3, 4],
        }
    }

    pub fn build<T: Scalar>(self, physics: PhysicsParams<T>) -> Result<Box<dyn Env<T>>> {
        physics.validate()?;
        Ok(match self {
            TaskKind::CartPoleBalance => Box::new(CartPole::new(CartPoleMode::Balance, physics)),
            TaskKind::CartPoleSwingUp => Box::new(CartPole::new(CartPoleMode::SwingUp, physics)),
            TaskKind::MountainCar => Box::new(MountainCar::new(physics)),
            TaskKind::AcrobotSwingUp => Box::new(Acrobot::new(physics)),
            TaskKind::DoublePendulum => Box::new(DoublePendulum::new(physics)),
        })
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL.iter().copied().find(|k| k.id() == s).ok_or_else(|| {
            let valid: Vec<_> = TaskKind::ALL.iter().map(|k| k.id()).collect();
            Error::Config(format!("unknown task `{s}`; valid tasks: {}", valid.join(", ")))
        })
    }
}

/// One classical Runge-Kutta step of `y' = f(y)`.
pub(crate) fn rk4<T: Scalar, const N: usize>(f: impl Fn(&[T; N]) -> [T; N], y: &[T; N], h: T) -> [T; N] {
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let k1 = f(y);
    let y2 = std::array::from_fn(|i| y[i] + half * h * k1[i]);
    let k2 = f(&y2);
    let y3 = std::array::from_fn(|i| y[i] + half * h * k2[i]);
    let k3 = f(&y3);
    let y4 = std::array::from_fn(|i| y[i] + h * k3[i]);
    let k4 = f(&y4);
    std::array::from_fn(|i| y[i] + h / T::lit(6.0) * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
}

/// Integrates `frame_skip` RK4 steps.
pub(crate) fn integrate<T: Scalar, const N: usize>(
    f: impl Fn(&[T; N]) -> [T; N],
    y: &[T; N],
    physics: &PhysicsParams<T>,
) -> [T; N] {
    let mut y = *y;
    for _ in 0..physics.frame_skip {
        y = rk4(&f, &y, physics.dt);
    }
    y
}

/// Validates a single-coordinate action and clamps it to the force limit.
pub(crate) fn scalar_force<T: Scalar>(action: &[T], limit: T) -> Result<T> {
    if action.len() != 1 {
        return Err(Error::Dimension {
            context: "task action",
            expected: 1,
            actual: action.len(),
        });
    }
    let a = action[0];
    if !a.is_finite() {
        return Err(Error::NonFinite("task action"));
    }
    Ok(a.max(-limit).min(limit))
}

pub(crate) fn perturbed<T: Scalar, const N: usize>(
    nominal: [T; N],
    noise: T,
    rng: &mut crate::rng::SeededRng,
) -> [T; N] {
    std::array::from_fn(|i| nominal[i] + rng.uniform_in(-noise, noise))
}
