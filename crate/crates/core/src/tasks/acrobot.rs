use crate::error::Result;
use crate::mdp::{Env, StepResult};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::{integrate, perturbed, scalar_force, PhysicsParams};

/// Joint angles (zero = hanging straight down) and their rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcrobotState<T> {
    pub theta1: T,
    pub theta2: T,
    pub theta1_dot: T,
    pub theta2_dot: T,
}

impl<T: Scalar> AcrobotState<T> {
    fn to_array(self) -> [T; 4] {
        [self.theta1, self.theta2, self.theta1_dot, self.theta2_dot]
    }

    fn from_array(a: [T; 4]) -> Self {
        Self {
            theta1: a[0],
            theta2: a[1],
            theta1_dot: a[2],
            theta2_dot: a[3],
        }
    }

    pub fn observation(&self) -> Vec<T> {
        self.to_array().to_vec()
    }
}

/// Mass matrix entries `(d11, d12, d22)` at joint angle `theta2`.
fn mass_matrix<T: Scalar>(p: &PhysicsParams<T>, theta2: T) -> (T, T, T) {
    let (m1, m2, l1) = (p.pole_mass, p.pole2_mass, p.pole_length);
    let half = T::lit(0.5);
    let lc1 = half * l1;
    let lc2 = half * p.pole2_length;
    let i = p.link_inertia;
    let c2 = theta2.cos();
    let d11 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + T::lit(2.0) * l1 * lc2 * c2) + i + i;
    let d12 = m2 * (lc2 * lc2 + l1 * lc2 * c2) + i;
    let d22 = m2 * lc2 * lc2 + i;
    (d11, d12, d22)
}

fn derivatives<T: Scalar>(p: &PhysicsParams<T>, s: &[T; 4], torque: T) -> [T; 4] {
    let [t1, t2, w1, w2] = *s;
    let (m1, m2, l1, g) = (p.pole_mass, p.pole2_mass, p.pole_length, p.gravity);
    let half = T::lit(0.5);
    let lc1 = half * l1;
    let lc2 = half * p.pole2_length;
    let (d11, d12, d22) = mass_matrix(p, t2);
    let s2 = t2.sin();
    let s12 = (t1 + t2).sin();
    let coriolis1 = -m2 * l1 * lc2 * s2 * (w2 * w2 + T::lit(2.0) * w1 * w2);
    let coriolis2 = m2 * l1 * lc2 * s2 * w1 * w1;
    let grav2 = m2 * lc2 * g * s12;
    let grav1 = (m1 * lc1 + m2 * l1) * g * t1.sin() + grav2;
    let rhs1 = -coriolis1 - grav1;
    let rhs2 = torque - coriolis2 - grav2;
    let det = d11 * d22 - d12 * d12;
    let acc1 = (d22 * rhs1 - d12 * rhs2) / det;
    let acc2 = (d11 * rhs2 - d12 * rhs1) / det;
    [w1, w2, acc1, acc2]
}

/// Tip position in the plane; the pivot is the origin and `y` points up.
pub fn acrobot_tip<T: Scalar>(p: &PhysicsParams<T>, s: &AcrobotState<T>) -> (T, T) {
    let a = s.theta1;
    let b = s.theta1 + s.theta2;
    (
        p.pole_length * a.sin() + p.pole2_length * b.sin(),
        -p.pole_length * a.cos() - p.pole2_length * b.cos(),
    )
}

/// Total mechanical energy.
pub fn acrobot_energy<T: Scalar>(p: &PhysicsParams<T>, s: &AcrobotState<T>) -> T {
    let (d11, d12, d22) = mass_matrix(p, s.theta2);
    let (w1, w2) = (s.theta1_dot, s.theta2_dot);
    let half = T::lit(0.5);
    let kinetic = half * (d11 * w1 * w1 + T::lit(2.0) * d12 * w1 * w2 + d22 * w2 * w2);
    let lc1 = half * p.pole_length;
    let lc2 = half * p.pole2_length;
    let potential = -p.pole_mass * p.gravity * lc1 * s.theta1.cos()
        - p.pole2_mass * p.gravity * (p.pole_length * s.theta1.cos() + lc2 * (s.theta1 + s.theta2).cos());
    kinetic + potential
}

pub fn acrobot_step<T: Scalar>(
    p: &PhysicsParams<T>,
    state: &AcrobotState<T>,
    action: &[T],
) -> Result<(AcrobotState<T>, StepResult<T>)> {
    let torque = scalar_force(action, p.force_limit)?;
    let next = AcrobotState::from_array(integrate(|s| derivatives(p, s, torque), &state.to_array(), p));
    let (tx, ty) = acrobot_tip(p, &next);
    let target_y = p.pole_length + p.pole2_length;
    let reward = -(tx * tx + (ty - target_y) * (ty - target_y)).sqrt();
    Ok((
        next,
        StepResult {
            observation: next.observation(),
            reward,
            terminated: false,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct Acrobot<T> {
    physics: PhysicsParams<T>,
    state: AcrobotState<T>,
}

impl<T: Scalar> Acrobot<T> {
    pub fn new(physics: PhysicsParams<T>) -> Self {
        Self {
            physics,
            state: AcrobotState::from_array([T::zero(); 4]),
        }
    }

    pub fn state(&self) -> &AcrobotState<T> {
        &self.state
    }

    pub fn set_state(&mut self, state: AcrobotState<T>) {
        self.state = state;
    }
}

impl<T: Scalar> Env<T> for Acrobot<T> {
    fn name(&self) -> String {
        "acrobot_swingup".into()
    }

    fn observation_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> (Vec<T>, Vec<T>) {
        (vec![-self.physics.force_limit], vec![self.physics.force_limit])
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<T> {
        self.state = AcrobotState::from_array(perturbed([T::zero(); 4], self.physics.init_noise, rng));
        self.state.observation()
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        let (next, result) = acrobot_step(&self.physics, &self.state, action)?;
        self.state = next;
        Ok(result)
    }

    fn physics(&self) -> &PhysicsParams<T> {
        &self.physics
    }

    fn set_physics(&mut self, physics: PhysicsParams<T>) {
        self.physics = physics;
    }

    fn clone_box(&self) -> Box<dyn Env<T>> {
        Box::new(self.clone())
    }
}
