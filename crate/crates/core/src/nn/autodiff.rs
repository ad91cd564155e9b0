//! Minimal scalar reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding the local partial derivatives with
//! respect to at most two parents; [`Var::backward`] sweeps the tape once in
//! reverse. The hand-derived network gradients are checked against this tape.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
struct Node<T> {
    parents: [(usize, T); 2],
    arity: u8,
}

/// Records a computation over scalars.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// A value on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    index: usize,
    value: T,
}

/// Adjoints of every tape entry with respect to one output.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    adjoints: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, v: &Var<'_, T>) -> T {
        self.adjoints[v.index]
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, parents: [(usize, T); 2], arity: u8) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, arity });
        nodes.len() - 1
    }

    /// A leaf input.
    pub fn var(&self, value: T) -> Var<'_, T> {
        let index = self.push([(0, T::zero()); 2], 0);
        Var {
            tape: self,
            index,
            value,
        }
    }

    pub fn vars(&self, values: &[T]) -> Vec<Var<'_, T>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> T {
        self.value
    }

    fn unary(&self, value: T, d: T) -> Self {
        let index = self.tape.push([(self.index, d), (0, T::zero())], 1);
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    fn binary(&self, other: &Self, value: T, da: T, db: T) -> Self {
        let index = self.tape.push([(self.index, da), (other.index, db)], 2);
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    pub fn tanh(self) -> Self {
        let y = self.value.tanh();
        self.unary(y, T::one() - y * y)
    }

    pub fn exp(self) -> Self {
        let y = self.value.exp();
        self.unary(y, y)
    }

    pub fn ln(self) -> Self {
        self.unary(self.value.ln(), T::one() / self.value)
    }

    pub fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }

    pub fn sqrt(self) -> Self {
        let y = self.value.sqrt();
        self.unary(y, T::one() / (T::lit(2.0) * y))
    }

    pub fn sigmoid(self) -> Self {
        let y = T::one() / (T::one() + (-self.value).exp());
        self.unary(y, y * (T::one() - y))
    }

    /// Subgradient 0 at the kink.
    pub fn relu(self) -> Self {
        if self.value > T::zero() {
            self.unary(self.value, T::one())
        } else {
            self.unary(T::zero(), T::zero())
        }
    }

    pub fn powi(self, n: i32) -> Self {
        self.unary(self.value.powi(n), T::lit(n as f64) * self.value.powi(n - 1))
    }

    pub fn max(self, other: Self) -> Self {
        if self.value >= other.value {
            self.binary(&other, self.value, T::one(), T::zero())
        } else {
            self.binary(&other, other.value, T::zero(), T::one())
        }
    }

    /// Reverse sweep from this output.
    pub fn backward(&self) -> Gradients<T> {
        let nodes = self.tape.nodes.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        adj[self.index] = T::one();
        for i in (0..=self.index).rev() {
            let a = adj[i];
            if a == T::zero() {
                continue;
            }
            let n = nodes[i];
            for k in 0..n.arity as usize {
                let (p, d) = n.parents[k];
                adj[p] += a * d;
            }
        }
        Gradients { adjoints: adj }
    }
}

/// Sum of a non-empty slice of variables.
pub fn sum<'t, T: Scalar>(vars: &[Var<'t, T>]) -> Var<'t, T> {
    let mut it = vars.iter();
    let first = *it.next().expect("sum of at least one variable");
    it.fold(first, |acc, &v| acc + v)
}

/// Evaluates `f` on a fresh tape and returns its value and gradient.
pub fn grad_scalar<T, F>(f: F, x: &[T]) -> (T, Vec<T>)
where
    T: Scalar,
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Var<'t, T>,
{
    let tape = Tape::new();
    let inputs = tape.vars(x);
    let out = f(&tape, &inputs);
    let g = out.backward();
    (out.value(), inputs.iter().map(|v| g.wrt(v)).collect())
}

impl<'t, T: Scalar> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(&o, self.value + o.value, T::one(), T::one())
    }
}

impl<'t, T: Scalar> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(&o, self.value - o.value, T::one(), -T::one())
    }
}

impl<'t, T: Scalar> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(&o, self.value * o.value, o.value, self.value)
    }
}

impl<'t, T: Scalar> Div for Var<'t, T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.value / o.value;
        self.binary(&o, q, T::one() / o.value, -q / o.value)
    }
}

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -T::one())
    }
}

impl<'t, T: Scalar> Add<T> for Var<'t, T> {
    type Output = Self;
    fn add(self, c: T) -> Self {
        self.unary(self.value + c, T::one())
    }
}

impl<'t, T: Scalar> Sub<T> for Var<'t, T> {
    type Output = Self;
    fn sub(self, c: T) -> Self {
        self.unary(self.value - c, T::one())
    }
}

impl<'t, T: Scalar> Mul<T> for Var<'t, T> {
    type Output = Self;
    fn mul(self, c: T) -> Self {
        self.unary(self.value * c, c)
    }
}

impl<'t, T: Scalar> Div<T> for Var<'t, T> {
    type Output = Self;
    fn div(self, c: T) -> Self {
        self.unary(self.value / c, T::one() / c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_gradient() {
        let (v, g) = grad_scalar(|t, _x| t.var(3.0f64), &[1.0, 2.0]);
        assert_eq!(v, 3.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn half_squared_norm() {
        let theta = [0.5f64, -1.5, 2.0];
        let (v, g) = grad_scalar(
            |_, x| sum(&x.iter().map(|&xi| xi * xi).collect::<Vec<_>>()) * 0.5,
            &theta,
        );
        assert!((v - 3.25).abs() < 1e-15);
        assert_eq!(g, theta.to_vec());
    }

    fn composite<'t>(_: &'t Tape<f64>, x: &[Var<'t, f64>]) -> Var<'t, f64> {
        let a = (x[0] * x[1]).tanh() + x[2].exp().ln() * x[0].sin();
        let b = (x[1] / (x[2] * x[2] + 1.0)).sigmoid() - x[0].cos().powi(3);
        a * b + x[1].relu() + (x[2] * x[2] + 0.5).sqrt()
    }

    #[test]
    fn composite_matches_finite_differences() {
        let x = [0.3, -0.7, 1.1];
        let (_, g) = grad_scalar(composite, &x);
        let eval = |p: &[f64]| grad_scalar(composite, p).0;
        let h = 1e-6;
        for i in 0..3 {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            let fd = (eval(&a) - eval(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn relu_kink_subgradient() {
        let (_, g) = grad_scalar(|_, x| x[0].relu(), &[0.0f64]);
        assert_eq!(g, vec![0.0]);
    }
}
