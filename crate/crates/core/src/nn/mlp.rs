use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::params::{xavier_uniform, ParamLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(T::zero()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output. Relu uses 0 at the kink.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            _ => Err(Error::Config(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
    activation: Activation,
}

/// Fully connected network whose weights live at fixed offsets of a flat parameter vector.
///
/// Weights of a layer are stored `inputs x outputs` row-major, so a batch
/// pass is `Y = act(X W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Layer outputs of a batch pass; `acts[0]` is the input.
#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    pub acts: Vec<Matrix<T>>,
}

impl<T: Scalar> MlpCache<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.acts.last().expect("cache holds the input at least")
    }
}

impl Mlp {
    /// Registers the layers of `sizes[0] -> ... -> sizes[n]` in `layout`.
    pub fn new(sizes: &[usize], activations: &[Activation], layout: &mut ParamLayout, prefix: &str) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::Config(format!(
                "network needs n+1 sizes for n activations, got {} sizes and {} activations",
                sizes.len(),
                activations.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .enumerate()
            .map(|(i, (w, &activation))| {
                let weight = layout.push(format!("{prefix}{i}.weight"), w[0], w[1]);
                let bias = layout.push(format!("{prefix}{i}.bias"), 1, w[1]);
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weight,
                    bias,
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    /// Xavier-uniform weights and zero biases.
    pub fn init<T: Scalar>(&self, params: &mut [T], rng: &mut SeededRng) {
        for l in &self.layers {
            let n = l.inputs * l.outputs;
            xavier_uniform(&mut params[l.weight..l.weight + n], l.inputs, l.outputs, rng);
            params[l.bias..l.bias + l.outputs].fill(T::zero());
        }
    }

    /// Single-input pass.
    pub fn forward<T: Scalar>(&self, params: &[T], x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut out = params[l.bias..l.bias + l.outputs].to_vec();
            for (i, &xi) in cur.iter().enumerate() {
                if xi == T::zero() {
                    continue;
                }
                let row = &params[l.weight + i * l.outputs..l.weight + (i + 1) * l.outputs];
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
            for o in &mut out {
                *o = l.activation.apply(*o);
            }
            cur = out;
        }
        cur
    }

    /// Batch pass over the rows of `x`.
    pub fn forward_batch<T: Scalar>(&self, params: &[T], x: Matrix<T>) -> MlpCache<T> {
        assert_eq!(x.cols(), self.input_dim(), "network input width");
        let b = x.rows();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for l in &self.layers {
            let input = acts.last().expect("non-empty");
            let mut out = Matrix::zeros(b, l.outputs);
            let bias = &params[l.bias..l.bias + l.outputs];
            for r in 0..b {
                out.row_mut(r).copy_from_slice(bias);
            }
            T::gemm(
                b,
                l.inputs,
                l.outputs,
                T::one(),
                input.as_slice(),
                l.inputs as isize,
                1,
                &params[l.weight..l.weight + l.inputs * l.outputs],
                l.outputs as isize,
                1,
                T::one(),
                out.as_mut_slice(),
                l.outputs as isize,
                1,
            );
            if l.activation != Activation::Identity {
                let act = l.activation;
                out.map_inplace(|z| act.apply(z));
            }
            acts.push(out);
        }
        MlpCache { acts }
    }

    /// Accumulates `d(sum d_out . output)/d params` into `grad`; returns the input gradient if asked.
    pub fn backward_batch<T: Scalar>(
        &self,
        params: &[T],
        cache: &MlpCache<T>,
        d_out: Matrix<T>,
        grad: &mut [T],
        want_input_grad: bool,
    ) -> Option<Matrix<T>> {
        let b = d_out.rows();
        let mut delta = d_out;
        for (li, l) in self.layers.iter().enumerate().rev() {
            let out = &cache.acts[li + 1];
            if l.activation != Activation::Identity {
                for (d, &y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= l.activation.derivative_from_output(y);
                }
            }
            let input = &cache.acts[li];
            // dW += X^T delta
            T::gemm(
                l.inputs,
                b,
                l.outputs,
                T::one(),
                input.as_slice(),
                1,
                l.inputs as isize,
                delta.as_slice(),
                l.outputs as isize,
                1,
                T::one(),
                &mut grad[l.weight..l.weight + l.inputs * l.outputs],
                l.outputs as isize,
                1,
            );
            let gb = &mut grad[l.bias..l.bias + l.outputs];
            for r in 0..b {
                for (g, &d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            if li == 0 && !want_input_grad {
                return None;
            }
            // delta_prev = delta W^T
            let mut prev = Matrix::zeros(b, l.inputs);
            T::gemm(
                b,
                l.outputs,
                l.inputs,
                T::one(),
                delta.as_slice(),
                l.outputs as isize,
                1,
                &params[l.weight..l.weight + l.inputs * l.outputs],
                1,
                l.outputs as isize,
                T::zero(),
                prev.as_mut_slice(),
                l.inputs as isize,
                1,
            );
            delta = prev;
        }
        Some(delta)
    }

    /// Directional derivative of the batch output along parameter direction `v`,
    /// optionally with an input tangent as well.
    pub fn jvp_batch<T: Scalar>(
        &self,
        params: &[T],
        cache: &MlpCache<T>,
        v: &[T],
        input_tangent: Option<&Matrix<T>>,
    ) -> Matrix<T> {
        let b = cache.acts[0].rows();
        let mut tangent: Option<Matrix<T>> = input_tangent.cloned();
        for (li, l) in self.layers.iter().enumerate() {
            let input = &cache.acts[li];
            let mut dz = Matrix::zeros(b, l.outputs);
            let vb = &v[l.bias..l.bias + l.outputs];
            for r in 0..b {
                dz.row_mut(r).copy_from_slice(vb);
            }
            // X dW
            T::gemm(
                b,
                l.inputs,
                l.outputs,
                T::one(),
                input.as_slice(),
                l.inputs as isize,
                1,
                &v[l.weight..l.weight + l.inputs * l.outputs],
                l.outputs as isize,
                1,
                T::one(),
                dz.as_mut_slice(),
                l.outputs as isize,
                1,
            );
            // dX W
            if let Some(t) = &tangent {
                T::gemm(
                    b,
                    l.inputs,
                    l.outputs,
                    T::one(),
                    t.as_slice(),
                    l.inputs as isize,
                    1,
                    &params[l.weight..l.weight + l.inputs * l.outputs],
                    l.outputs as isize,
                    1,
                    T::one(),
                    dz.as_mut_slice(),
                    l.outputs as isize,
                    1,
                );
            }
            if l.activation != Activation::Identity {
                let out = &cache.acts[li + 1];
                for (d, &y) in dz.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= l.activation.derivative_from_output(y);
                }
            }
            tangent = Some(dz);
        }
        tangent.expect("at least one layer")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (Mlp, Vec<f64>) {
        let mut layout = ParamLayout::new();
        let net = Mlp::new(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], &mut layout, "l").unwrap();
        let mut p = vec![0.0; layout.total()];
        let mut rng = SeededRng::new(1, 0);
        for v in &mut p {
            *v = rng.normal::<f64>() * 0.5;
        }
        (net, p)
    }

    fn inputs() -> Matrix<f64> {
        Matrix::from_rows(&[[0.1, -0.2, 0.3], [1.0, 0.5, -0.7]], 3)
    }

    #[test]
    fn batch_matches_single() {
        let (net, p) = tiny();
        let x = inputs();
        let cache = net.forward_batch(&p, x.clone());
        for r in 0..2 {
            let single = net.forward(&p, x.row(r));
            for (a, b) in single.iter().zip(cache.output().row(r)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (net, p) = tiny();
        let x = inputs();
        let w = Matrix::from_rows(&[[0.3, -1.0], [0.7, 0.2]], 2);
        let objective = |q: &[f64]| -> f64 {
            let out = net.forward_batch(q, x.clone());
            out.output()
                .as_slice()
                .iter()
                .zip(w.as_slice())
                .map(|(a, b)| a * b)
                .sum()
        };
        let cache = net.forward_batch(&p, x.clone());
        let mut g = vec![0.0; p.len()];
        let dx = net.backward_batch(&p, &cache, w.clone(), &mut g, true).unwrap();
        let h = 1e-6;
        for i in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (objective(&a) - objective(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "param {i}: {fd} vs {}", g[i]);
        }
        // input gradient
        for r in 0..2 {
            for c in 0..3 {
                let mut xa = x.clone();
                let mut xb = x.clone();
                xa[(r, c)] += h;
                xb[(r, c)] -= h;
                let f = |m: Matrix<f64>| -> f64 {
                    let out = net.forward_batch(&p, m);
                    out.output()
                        .as_slice()
                        .iter()
                        .zip(w.as_slice())
                        .map(|(a, b)| a * b)
                        .sum()
                };
                let fd = (f(xa) - f(xb)) / (2.0 * h);
                assert!((fd - dx[(r, c)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn jvp_matches_finite_differences() {
        let (net, p) = tiny();
        let x = inputs();
        let mut rng = SeededRng::new(8, 0);
        let v: Vec<f64> = (0..p.len()).map(|_| rng.normal()).collect();
        let cache = net.forward_batch(&p, x.clone());
        let t = net.jvp_batch(&p, &cache, &v, None);
        let h = 1e-6;
        let shifted = |s: f64| {
            let q: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            net.forward_batch(&q, x.clone()).output().clone()
        };
        let (a, b) = (shifted(h), shifted(-h));
        for i in 0..t.as_slice().len() {
            let fd = (a.as_slice()[i] - b.as_slice()[i]) / (2.0 * h);
            assert!((fd - t.as_slice()[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn relu_kink_has_zero_derivative() {
        assert_eq!(Activation::Relu.derivative_from_output(0.0f64), 0.0);
        assert_eq!(Activation::Relu.apply(-2.0f64), 0.0);
    }

    #[test]
    fn bad_shapes_rejected() {
        let mut l = ParamLayout::new();
        assert!(Mlp::new(&[3], &[], &mut l, "x").is_err());
        assert!(Mlp::new(&[3, 2], &[], &mut l, "x").is_err());
        assert!(Mlp::new(&[3, 0, 1], &[Activation::Tanh, Activation::Tanh], &mut l, "x").is_err());
    }
}
