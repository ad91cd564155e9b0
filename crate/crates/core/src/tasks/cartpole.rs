use crate::error::Result;
use crate::mdp::{Env, StepResult};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::{integrate, perturbed, scalar_force, PhysicsParams};

/// Cart position, pole angle from upright, and their rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartPoleState<T> {
    pub x: T,
    pub theta: T,
    pub x_dot: T,
    pub theta_dot: T,
}

impl<T: Scalar> CartPoleState<T> {
    fn to_array(self) -> [T; 4] {
        [self.x, self.theta, self.x_dot, self.theta_dot]
    }

    fn from_array(a: [T; 4]) -> Self {
        Self {
            x: a[0],
            theta: a[1],
            x_dot: a[2],
            theta_dot: a[3],
        }
    }

    pub fn observation(&self) -> Vec<T> {
        self.to_array().to_vec()
    }
}

fn derivatives<T: Scalar>(p: &PhysicsParams<T>, s: &[T; 4], force: T) -> [T; 4] {
    let [_, theta, x_dot, theta_dot] = *s;
    let total = p.cart_mass + p.pole_mass;
    let l = p.pole_length;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + p.pole_mass * l * theta_dot * theta_dot * sin) / total;
    let theta_acc = (p.gravity * sin - cos * temp) / (l * (T::lit(4.0 / 3.0) - p.pole_mass * cos * cos / total));
    let x_acc = temp - p.pole_mass * l * theta_acc * cos / total;
    [x_dot, theta_dot, x_acc, theta_acc]
}

fn advance<T: Scalar>(p: &PhysicsParams<T>, state: &CartPoleState<T>, action: &[T]) -> Result<(CartPoleState<T>, T)> {
    let force = scalar_force(action, p.force_limit)?;
    let next = integrate(|s| derivatives(p, s, force), &state.to_array(), p);
    Ok((CartPoleState::from_array(next), force))
}

/// One control step of the balancing task.
pub fn cartpole_balance_step<T: Scalar>(
    p: &PhysicsParams<T>,
    state: &CartPoleState<T>,
    action: &[T],
) -> Result<(CartPoleState<T>, StepResult<T>)> {
    let (next, force) = advance(p, state, action)?;
    let reward = T::lit(10.0) - (T::one() - next.theta.cos()) - T::lit(1e-5) * force * force;
    let terminated = next.x.abs() > T::lit(2.4) || next.theta.abs() > T::lit(0.2);
    let obs = next.observation();
    Ok((
        next,
        StepResult {
            observation: obs,
            reward,
            terminated,
        },
    ))
}

/// One control step of the swing-up task.
pub fn cartpole_swingup_step<T: Scalar>(
    p: &PhysicsParams<T>,
    state: &CartPoleState<T>,
    action: &[T],
) -> Result<(CartPoleState<T>, StepResult<T>)> {
    let (next, _) = advance(p, state, action)?;
    let terminated = next.x.abs() > T::lit(3.0);
    let mut reward = next.theta.cos();
    if terminated {
        reward -= T::lit(100.0);
    }
    let obs = next.observation();
    Ok((
        next,
        StepResult {
            observation: obs,
            reward,
            terminated,
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CartPoleMode {
    Balance,
    SwingUp,
}

#[derive(Clone, Debug)]
pub struct CartPole<T> {
    mode: CartPoleMode,
    physics: PhysicsParams<T>,
    state: CartPoleState<T>,
}

impl<T: Scalar> CartPole<T> {
    pub fn new(mode: CartPoleMode, physics: PhysicsParams<T>) -> Self {
        let state = CartPoleState::from_array([T::zero(); 4]);
        Self { mode, physics, state }
    }

    pub fn state(&self) -> &CartPoleState<T> {
        &self.state
    }

    pub fn set_state(&mut self, state: CartPoleState<T>) {
        self.state = state;
    }
}

impl<T: Scalar> Env<T> for CartPole<T> {
    fn name(&self) -> String {
        match self.mode {
            CartPoleMode::Balance => "cartpole_balance".into(),
            CartPoleMode::SwingUp => "cartpole_swingup".into(),
        }
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
        let theta0 = match self.mode {
            CartPoleMode::Balance => T::zero(),
            CartPoleMode::SwingUp => T::PI(),
        };
        let nominal = [T::zero(), theta0, T::zero(), T::zero()];
        self.state = CartPoleState::from_array(perturbed(nominal, self.physics.init_noise, rng));
        self.state.observation()
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        let (next, result) = match self.mode {
            CartPoleMode::Balance => cartpole_balance_step(&self.physics, &self.state, action)?,
            CartPoleMode::SwingUp => cartpole_swingup_step(&self.physics, &self.state, action)?,
        };
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskKind;

    fn params() -> PhysicsParams<f64> {
        PhysicsParams::for_task(TaskKind::CartPoleBalance)
    }

    fn upright() -> CartPoleState<f64> {
        CartPoleState::from_array([0.0; 4])
    }

    #[test]
    fn balance_reward_at_rest() {
        let (next, r) = cartpole_balance_step(&params(), &upright(), &[0.0]).unwrap();
        assert_eq!(next, upright());
        assert_eq!(r.reward, 10.0);
        assert!(!r.terminated);
    }

    #[test]
    fn balance_action_penalty() {
        let (next, r) = cartpole_balance_step(&params(), &upright(), &[10.0]).unwrap();
        // The push tilts the pole slightly; the closed form must still hold.
        let expected = 10.0 - (1.0 - next.theta.cos()) - 1e-5 * 100.0;
        assert_eq!(r.reward, expected);
        assert!((r.reward - 9.999).abs() < 1e-2);
    }

    #[test]
    fn balance_terminates_on_angle() {
        let s = CartPoleState::from_array([0.0, 0.25, 0.0, 0.0]);
        let (next, r) = cartpole_balance_step(&params(), &s, &[0.0]).unwrap();
        assert!(next.theta.abs() > 0.25);
        assert!(r.terminated);
        let s = CartPoleState::from_array([2.39, 0.0, 1.0, 0.0]);
        assert!(cartpole_balance_step(&params(), &s, &[0.0]).unwrap().1.terminated);
    }

    #[test]
    fn swingup_rewards() {
        let p = PhysicsParams::for_task(TaskKind::CartPoleSwingUp);
        let (_, r) = cartpole_swingup_step(&p, &upright(), &[0.0]).unwrap();
        assert_eq!(r.reward, 1.0);
        let down = CartPoleState::from_array([0.0, std::f64::consts::PI, 0.0, 0.0]);
        let (_, r) = cartpole_swingup_step(&p, &down, &[0.0]).unwrap();
        assert!((r.reward + 1.0).abs() < 1e-12);
        assert!(!r.terminated);
    }

    #[test]
    fn swingup_boundary_penalty() {
        let p = PhysicsParams::for_task(TaskKind::CartPoleSwingUp);
        let s = CartPoleState::from_array([2.95, std::f64::consts::PI, 2.0, 0.0]);
        let (next, r) = cartpole_swingup_step(&p, &s, &[0.0]).unwrap();
        assert!(next.x > 3.0 && next.x < 3.2);
        assert!(r.terminated);
        assert_eq!(r.reward, next.theta.cos() - 100.0);
    }

    #[test]
    fn non_finite_action_rejected() {
        assert!(cartpole_balance_step(&params(), &upright(), &[f64::NAN]).is_err());
        assert!(cartpole_balance_step(&params(), &upright(), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn step_is_pure() {
        let s = CartPoleState::from_array([0.1, -0.05, 0.3, 0.2]);
        let a = cartpole_balance_step(&params(), &s, &[3.0]).unwrap();
        let b = cartpole_balance_step(&params(), &s, &[3.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pushing_right_accelerates_cart_right() {
        let (next, _) = cartpole_balance_step(&params(), &upright(), &[10.0]).unwrap();
        assert!(next.x_dot > 0.0);
        // and the pole falls back
        assert!(next.theta_dot < 0.0);
    }

    #[test]
    fn reset_noise_bounded() {
        let mut env = CartPole::new(CartPoleMode::SwingUp, params());
        let mut rng = SeededRng::new(0, 0);
        for _ in 0..50 {
            let o = env.reset(&mut rng);
            assert!(o[0].abs() <= 0.01);
            assert!((o[1] - std::f64::consts::PI).abs() <= 0.01);
        }
    }
}
