use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::mlp::{Activation, Mlp, MlpCache};
use super::params::ParamLayout;

fn hidden_net(
    input: usize,
    hidden: &[usize],
    output: usize,
    out_act: Activation,
    layout: &mut ParamLayout,
    prefix: &str,
) -> Result<Mlp> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(out_act);
    Mlp::new(&sizes, &acts, layout, prefix)
}

/// `a = center + half_range * tanh(net(s))`, so actions always lie within the bounds.
#[derive(Clone, Debug)]
pub struct DeterministicPolicy<T> {
    net: Mlp,
    obs_dim: usize,
    center: Vec<T>,
    half_range: Vec<T>,
    pub params: Vec<T>,
}

impl<T: Scalar> DeterministicPolicy<T> {
    pub fn new(obs_dim: usize, lower: &[T], upper: &[T], hidden: &[usize], rng: &mut SeededRng) -> Result<Self> {
        check_dim("action bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config("action bounds must satisfy lower < upper".into()));
        }
        let mut layout = ParamLayout::new();
        let net = hidden_net(obs_dim, hidden, lower.len(), Activation::Tanh, &mut layout, "actor")?;
        let mut params = vec![T::zero(); layout.total()];
        net.init(&mut params, rng);
        let two = T::lit(2.0);
        Ok(Self {
            net,
            obs_dim,
            center: lower.iter().zip(upper).map(|(&l, &u)| (l + u) / two).collect(),
            half_range: lower.iter().zip(upper).map(|(&l, &u)| (u - l) / two).collect(),
            params,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.center.len()
    }

    fn squash(&self, raw: &mut [T]) {
        for ((a, &c), &h) in raw.iter_mut().zip(&self.center).zip(&self.half_range) {
            *a = c + h * *a;
        }
    }

    pub fn act_with(&self, params: &[T], obs: &[T]) -> Vec<T> {
        let mut a = self.net.forward(params, obs);
        self.squash(&mut a);
        a
    }

    pub fn forward_batch(&self, params: &[T], obs: Matrix<T>) -> (MlpCache<T>, Matrix<T>) {
        let cache = self.net.forward_batch(params, obs);
        let mut actions = cache.output().clone();
        for r in 0..actions.rows() {
            self.squash(actions.row_mut(r));
        }
        (cache, actions)
    }

    /// Gradient of `sum d_actions . actions` with respect to the parameters.
    pub fn backward_batch(&self, params: &[T], cache: &MlpCache<T>, mut d_actions: Matrix<T>) -> Vec<T> {
        for r in 0..d_actions.rows() {
            for (d, &h) in d_actions.row_mut(r).iter_mut().zip(&self.half_range) {
                *d *= h;
            }
        }
        let mut grad = vec![T::zero(); params.len()];
        self.net.backward_batch(params, cache, d_actions, &mut grad, false);
        grad
    }
}

/// Scalar action-value network on the concatenation `(s, a)`.
#[derive(Clone, Debug)]
pub struct QFunction<T> {
    net: Mlp,
    obs_dim: usize,
    action_dim: usize,
    pub params: Vec<T>,
}

impl<T: Scalar> QFunction<T> {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let mut layout = ParamLayout::new();
        let net = hidden_net(
            obs_dim + action_dim,
            hidden,
            1,
            Activation::Identity,
            &mut layout,
            "critic",
        )?;
        let mut params = vec![T::zero(); layout.total()];
        net.init(&mut params, rng);
        Ok(Self {
            net,
            obs_dim,
            action_dim,
            params,
        })
    }

    fn join(&self, obs: &Matrix<T>, actions: &Matrix<T>) -> Matrix<T> {
        let m = obs.rows();
        let mut x = Matrix::zeros(m, self.obs_dim + self.action_dim);
        for r in 0..m {
            let row = x.row_mut(r);
            row[..self.obs_dim].copy_from_slice(obs.row(r));
            row[self.obs_dim..].copy_from_slice(actions.row(r));
        }
        x
    }

    /// Values of each `(obs, action)` row.
    pub fn forward_batch(&self, params: &[T], obs: &Matrix<T>, actions: &Matrix<T>) -> (MlpCache<T>, Vec<T>) {
        let cache = self.net.forward_batch(params, self.join(obs, actions));
        let values = cache.output().as_slice().to_vec();
        (cache, values)
    }

    pub fn value(&self, params: &[T], obs: &[T], action: &[T]) -> T {
        let mut x = obs.to_vec();
        x.extend_from_slice(action);
        self.net.forward(params, &x)[0]
    }

    /// Parameter gradient and action gradient of `sum d_values . Q`.
    pub fn backward_batch(&self, params: &[T], cache: &MlpCache<T>, d_values: &[T]) -> (Vec<T>, Matrix<T>) {
        let m = d_values.len();
        let mut grad = vec![T::zero(); params.len()];
        let dx = self
            .net
            .backward_batch(
                params,
                cache,
                Matrix::from_vec(m, 1, d_values.to_vec()),
                &mut grad,
                true,
            )
            .expect("input gradient requested");
        let mut da = Matrix::zeros(m, self.action_dim);
        for r in 0..m {
            da.row_mut(r).copy_from_slice(&dx.row(r)[self.obs_dim..]);
        }
        (grad, da)
    }
}
