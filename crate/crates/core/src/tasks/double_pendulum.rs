use crate::error::Result;
use crate::mdp::{Env, StepResult};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::{integrate, perturbed, scalar_force, PhysicsParams};

/// Cart position, joint angles (zero = both links upright) and their rates.
///
/// `theta2` is measured relative to the first link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoublePendulumState<T> {
    pub x: T,
    pub theta1: T,
    pub theta2: T,
    pub x_dot: T,
    pub theta1_dot: T,
    pub theta2_dot: T,
}

impl<T: Scalar> DoublePendulumState<T> {
    fn to_array(self) -> [T; 6] {
        [
            self.x,
            self.theta1,
            self.theta2,
            self.x_dot,
            self.theta1_dot,
            self.theta2_dot,
        ]
    }

    fn from_array(a: [T; 6]) -> Self {
        Self {
            x: a[0],
            theta1: a[1],
            theta2: a[2],
            x_dot: a[3],
            theta1_dot: a[4],
            theta2_dot: a[5],
        }
    }

    /// `(x, sin t1, cos t1, sin t2, cos t2, x', t1', t2')`.
    pub fn observation(&self) -> Vec<T> {
        let (s1, c1) = self.theta1.sin_cos();
        let (s2, c2) = self.theta2.sin_cos();
        vec![self.x, s1, c1, s2, c2, self.x_dot, self.theta1_dot, self.theta2_dot]
    }
}

/// Symmetric mass matrix in cart/absolute-angle coordinates, rows packed.
fn mass_matrix<T: Scalar>(p: &PhysicsParams<T>, phi1: T, phi2: T) -> [[T; 3]; 3] {
    let (mc, m1, m2, l1, l2) = (p.cart_mass, p.pole_mass, p.pole2_mass, p.pole_length, p.pole2_length);
    let half = T::lit(0.5);
    let a2 = half * l2;
    let k1 = m1 * half * l1 + m2 * l1;
    let m11 = mc + m1 + m2;
    let m12 = k1 * phi1.cos();
    let m13 = m2 * a2 * phi2.cos();
    let m22 = m1 * l1 * l1 / T::lit(3.0) + m2 * l1 * l1;
    let m23 = m2 * l1 * a2 * (phi1 - phi2).cos();
    let m33 = m2 * l2 * l2 / T::lit(3.0);
    [[m11, m12, m13], [m12, m22, m23], [m13, m23, m33]]
}

fn det3<T: Scalar>(m: &[[T; 3]; 3]) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cramer's rule; the mass matrix is always well conditioned for positive parameters.
fn solve3<T: Scalar>(m: &[[T; 3]; 3], f: &[T; 3]) -> [T; 3] {
    let d = det3(m);
    std::array::from_fn(|col| {
        let mut mc = *m;
        for row in 0..3 {
            mc[row][col] = f[row];
        }
        det3(&mc) / d
    })
}

fn derivatives<T: Scalar>(p: &PhysicsParams<T>, s: &[T; 6], force: T) -> [T; 6] {
    let [_, t1, t2, v, w1, w2] = *s;
    let phi1 = t1;
    let phi2 = t1 + t2;
    let om1 = w1;
    let om2 = w1 + w2;
    let (m1, m2, l1, l2, g) = (p.pole_mass, p.pole2_mass, p.pole_length, p.pole2_length, p.gravity);
    let half = T::lit(0.5);
    let a2 = half * l2;
    let k1 = m1 * half * l1 + m2 * l1;
    let s12 = (phi1 - phi2).sin();
    let f = [
        force + k1 * phi1.sin() * om1 * om1 + m2 * a2 * phi2.sin() * om2 * om2,
        -m2 * l1 * a2 * s12 * om2 * om2 + k1 * g * phi1.sin(),
        m2 * l1 * a2 * s12 * om1 * om1 + m2 * a2 * g * phi2.sin(),
    ];
    let [x_acc, phi1_acc, phi2_acc] = solve3(&mass_matrix(p, phi1, phi2), &f);
    [v, w1, w2, x_acc, phi1_acc, phi2_acc - phi1_acc]
}

/// Tip of the second link; `y` points up from the cart's rail.
pub fn double_pendulum_tip<T: Scalar>(p: &PhysicsParams<T>, s: &DoublePendulumState<T>) -> (T, T) {
    let phi1 = s.theta1;
    let phi2 = s.theta1 + s.theta2;
    (
        s.x + p.pole_length * phi1.sin() + p.pole2_length * phi2.sin(),
        p.pole_length * phi1.cos() + p.pole2_length * phi2.cos(),
    )
}

/// Total mechanical energy.
pub fn double_pendulum_energy<T: Scalar>(p: &PhysicsParams<T>, s: &DoublePendulumState<T>) -> T {
    let phi1 = s.theta1;
    let phi2 = s.theta1 + s.theta2;
    let q = [s.x_dot, s.theta1_dot, s.theta1_dot + s.theta2_dot];
    let m = mass_matrix(p, phi1, phi2);
    let mut kinetic = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            kinetic += m[i][j] * q[i] * q[j];
        }
    }
    kinetic *= T::lit(0.5);
    let half = T::lit(0.5);
    let potential = p.gravity
        * (p.pole_mass * half * p.pole_length * phi1.cos()
            + p.pole2_mass * (p.pole_length * phi1.cos() + half * p.pole2_length * phi2.cos()));
    kinetic + potential
}

pub fn double_pendulum_step<T: Scalar>(
    p: &PhysicsParams<T>,
    state: &DoublePendulumState<T>,
    action: &[T],
) -> Result<(DoublePendulumState<T>, StepResult<T>)> {
    let force = scalar_force(action, p.force_limit)?;
    let next = DoublePendulumState::from_array(integrate(|s| derivatives(p, s, force), &state.to_array(), p));
    let (tx, ty) = double_pendulum_tip(p, &next);
    let two = T::lit(2.0);
    let reward = T::lit(10.0)
        - T::lit(0.01) * tx * tx
        - (ty - two) * (ty - two)
        - T::lit(1e-3) * next.theta1_dot * next.theta1_dot
        - T::lit(5e-3) * next.theta2_dot * next.theta2_dot;
    Ok((
        next,
        StepResult {
            observation: next.observation(),
            reward,
            terminated: ty <= T::one(),
        },
    ))
}

#[derive(Clone, Debug)]
pub struct DoublePendulum<T> {
    physics: PhysicsParams<T>,
    state: DoublePendulumState<T>,
}

impl<T: Scalar> DoublePendulum<T> {
    pub fn new(physics: PhysicsParams<T>) -> Self {
        Self {
            physics,
            state: DoublePendulumState::from_array([T::zero(); 6]),
        }
    }

    pub fn state(&self) -> &DoublePendulumState<T> {
        &self.state
    }

    pub fn set_state(&mut self, state: DoublePendulumState<T>) {
        self.state = state;
    }
}

impl<T: Scalar> Env<T> for DoublePendulum<T> {
    fn name(&self) -> String {
        "double_pendulum".into()
    }

    fn observation_dim(&self) -> usize {
        8
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> (Vec<T>, Vec<T>) {
        (vec![-self.physics.force_limit], vec![self.physics.force_limit])
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<T> {
        self.state = DoublePendulumState::from_array(perturbed([T::zero(); 6], self.physics.init_noise, rng));
        self.state.observation()
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        let (next, result) = double_pendulum_step(&self.physics, &self.state, action)?;
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
        PhysicsParams::for_task(TaskKind::DoublePendulum)
    }

    fn st(a: [f64; 6]) -> DoublePendulumState<f64> {
        DoublePendulumState::from_array(a)
    }

    #[test]
    fn balanced_point_reward() {
        let (next, r) = double_pendulum_step(&params(), &st([0.0; 6]), &[0.0]).unwrap();
        assert_eq!(next, st([0.0; 6]));
        assert_eq!(r.reward, 10.0);
        assert!(!r.terminated);
    }

    #[test]
    fn offset_cart_reward() {
        let (_, r) = double_pendulum_step(&params(), &st([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), &[0.0]).unwrap();
        assert!((r.reward - 9.99).abs() < 1e-12);
    }

    #[test]
    fn low_tip_terminates() {
        // Both links tilted so the tip sits below height one.
        let s = st([0.0, 1.2, 0.0, 0.0, 0.0, 0.0]);
        let (next, r) = double_pendulum_step(&params(), &s, &[0.0]).unwrap();
        assert!(double_pendulum_tip(&params(), &next).1 <= 1.0);
        assert!(r.terminated);
    }

    #[test]
    fn observation_encodes_angles() {
        let s = st([0.5, 0.3, -0.2, 1.0, 2.0, 3.0]);
        let o = s.observation();
        assert_eq!(o.len(), 8);
        assert_eq!(o[1], 0.3f64.sin());
        assert_eq!(o[2], 0.3f64.cos());
        assert_eq!(o[3], (-0.2f64).sin());
        assert_eq!(o[4], (-0.2f64).cos());
    }

    #[test]
    fn energy_conserved_without_force() {
        let p = params();
        let mut s = st([0.0, 0.4, -0.3, 0.0, 0.0, 0.0]);
        let e0 = double_pendulum_energy(&p, &s);
        for _ in 0..500 {
            s = double_pendulum_step(&p, &s, &[0.0]).unwrap().0;
        }
        let e1 = double_pendulum_energy(&p, &s);
        assert!(((e1 - e0) / e0.abs()).abs() < 1e-3, "{e0} -> {e1}");
    }

    #[test]
    fn momentum_conserved_without_force() {
        // No horizontal external force: total horizontal momentum d/dq' (row 0 of M q') is constant.
        let p = params();
        let momentum = |s: &DoublePendulumState<f64>| {
            let m = mass_matrix(&p, s.theta1, s.theta1 + s.theta2);
            let q = [s.x_dot, s.theta1_dot, s.theta1_dot + s.theta2_dot];
            m[0][0] * q[0] + m[0][1] * q[1] + m[0][2] * q[2]
        };
        let mut s = st([0.0, 0.4, -0.3, 0.2, 0.0, 0.1]);
        let p0 = momentum(&s);
        for _ in 0..200 {
            s = double_pendulum_step(&p, &s, &[0.0]).unwrap().0;
        }
        let drift = (momentum(&s) - p0).abs();
        assert!(drift < 1e-4, "{drift}");
    }
}
