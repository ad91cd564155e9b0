use crate::error::{check_dim, Result};
use crate::scalar::Scalar;

/// Adaptive moment estimation for minimisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(dim: usize, learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Moments and step count as `[t, m.., v..]`.
    pub fn to_state(&self) -> Vec<T> {
        let mut s = Vec::with_capacity(1 + 2 * self.m.len());
        s.push(T::lit(self.t as f64));
        s.extend_from_slice(&self.m);
        s.extend_from_slice(&self.v);
        s
    }

    pub fn load_state(&mut self, state: &[T]) -> Result<()> {
        let n = self.m.len();
        check_dim("adam state", 1 + 2 * n, state.len())?;
        self.t = state[0].as_f64() as i32;
        self.m.copy_from_slice(&state[1..1 + n]);
        self.v.copy_from_slice(&state[1 + n..]);
        Ok(())
    }

    /// `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        check_dim("adam parameters", self.m.len(), params.len())?;
        check_dim("adam gradient", self.m.len(), grad.len())?;
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_has_learning_rate_magnitude() {
        let mut opt = Adam::new(2, 0.1);
        let mut p = vec![1.0f64, -1.0];
        opt.step(&mut p, &[5.0, -0.01]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-4);
    }

    #[test]
    fn minimises_quadratic() {
        let mut opt = Adam::new(2, 0.05);
        let mut p = vec![3.0f64, -2.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0), 20.0 * (p[1] + 0.5)];
            opt.step(&mut p, &g).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn state_round_trip() {
        let mut a = Adam::new(2, 0.1);
        let mut p = vec![1.0f64, 2.0];
        a.step(&mut p, &[0.5, -1.0]).unwrap();
        let mut b = Adam::new(2, 0.1);
        b.load_state(&a.to_state()).unwrap();
        assert_eq!(a, b);
        assert!(b.load_state(&[0.0; 4]).is_err());
    }

    #[test]
    fn dimension_checked() {
        let mut opt = Adam::new(2, 0.1);
        assert!(opt.step(&mut [0.0f64; 3], &[0.0; 3]).is_err());
    }
}
