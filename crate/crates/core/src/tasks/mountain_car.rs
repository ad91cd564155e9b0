use crate::error::Result;
use crate::mdp::{Env, StepResult};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::{integrate, perturbed, scalar_force, PhysicsParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MountainCarState<T> {
    pub x: T,
    pub x_dot: T,
}

impl<T: Scalar> MountainCarState<T> {
    pub fn observation(&self) -> Vec<T> {
        vec![self.x, self.x_dot]
    }
}

/// Height of the valley floor: `H (1 - cos(pi x / W)) / 2`, zero at the bottom.
pub fn valley_height<T: Scalar>(p: &PhysicsParams<T>, x: T) -> T {
    p.valley_height * (T::one() - (T::PI() * x / p.valley_width).cos()) / T::lit(2.0)
}

/// First and second derivatives of the valley profile.
fn slope<T: Scalar>(p: &PhysicsParams<T>, x: T) -> (T, T) {
    let k = T::PI() / p.valley_width;
    let half_h = p.valley_height / T::lit(2.0);
    let (s, c) = (k * x).sin_cos();
    (half_h * k * s, half_h * k * k * c)
}

/// A bead on the valley curve pushed by a tangential force.
fn derivatives<T: Scalar>(p: &PhysicsParams<T>, s: &[T; 2], force: T) -> [T; 2] {
    let [x, v] = *s;
    let (h1, h2) = slope(p, x);
    let stretch = T::one() + h1 * h1;
    let m = p.cart_mass;
    let acc = (force * stretch.sqrt() - m * p.gravity * h1 - m * h1 * h2 * v * v) / (m * stretch);
    [v, acc]
}

/// Kinetic plus potential energy of the car.
pub fn mountain_car_energy<T: Scalar>(p: &PhysicsParams<T>, s: &MountainCarState<T>) -> T {
    let (h1, _) = slope(p, s.x);
    let m = p.cart_mass;
    T::lit(0.5) * m * (T::one() + h1 * h1) * s.x_dot * s.x_dot + m * p.gravity * valley_height(p, s.x)
}

pub fn mountain_car_step<T: Scalar>(
    p: &PhysicsParams<T>,
    state: &MountainCarState<T>,
    action: &[T],
) -> Result<(MountainCarState<T>, StepResult<T>)> {
    let force = scalar_force(action, p.force_limit)?;
    let [x, x_dot] = integrate(|s| derivatives(p, s, force), &[state.x, state.x_dot], p);
    let next = MountainCarState { x, x_dot };
    let height = valley_height(p, x);
    Ok((
        next,
        StepResult {
            observation: next.observation(),
            reward: height - T::one(),
            terminated: height >= T::lit(0.6),
        },
    ))
}

#[derive(Clone, Debug)]
pub struct MountainCar<T> {
    physics: PhysicsParams<T>,
    state: MountainCarState<T>,
}

impl<T: Scalar> MountainCar<T> {
    pub fn new(physics: PhysicsParams<T>) -> Self {
        Self {
            physics,
            state: MountainCarState {
                x: T::zero(),
                x_dot: T::zero(),
            },
        }
    }

    pub fn state(&self) -> &MountainCarState<T> {
        &self.state
    }

    pub fn set_state(&mut self, state: MountainCarState<T>) {
        self.state = state;
    }
}

impl<T: Scalar> Env<T> for MountainCar<T> {
    fn name(&self) -> String {
        "mountain_car".into()
    }

    fn observation_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> (Vec<T>, Vec<T>) {
        (vec![-self.physics.force_limit], vec![self.physics.force_limit])
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<T> {
        let [x, x_dot] = perturbed([T::zero(); 2], self.physics.init_noise, rng);
        self.state = MountainCarState { x, x_dot };
        self.state.observation()
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        let (next, result) = mountain_car_step(&self.physics, &self.state, action)?;
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
