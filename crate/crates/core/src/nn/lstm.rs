use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::params::{xavier_uniform, ParamLayout};

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Gated recurrent cell with input, forget, candidate and output gates.
///
/// Pre-activations are `z = x Wx + h Wh + b`, laid out as four `hidden`-wide
/// column groups in the order input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    input: usize,
    hidden: usize,
    wx: usize,
    wh: usize,
    bias: usize,
}

/// Recurrent state carried between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

/// Per-step activations of a batch of sequences.
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    pub inputs: Matrix<T>,
    /// Post-nonlinearity gate values, `rows x 4H`.
    pub gates: Matrix<T>,
    pub cell: Matrix<T>,
    pub cell_tanh: Matrix<T>,
    pub hidden: Matrix<T>,
    pub starts: Vec<usize>,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, layout: &mut ParamLayout, prefix: &str) -> Self {
        let wx = layout.push(format!("{prefix}.wx"), input, 4 * hidden);
        let wh = layout.push(format!("{prefix}.wh"), hidden, 4 * hidden);
        let bias = layout.push(format!("{prefix}.bias"), 1, 4 * hidden);
        Self {
            input,
            hidden,
            wx,
            wh,
            bias,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn init<T: Scalar>(&self, params: &mut [T], rng: &mut SeededRng) {
        let g = 4 * self.hidden;
        xavier_uniform(&mut params[self.wx..self.wx + self.input * g], self.input, g, rng);
        xavier_uniform(&mut params[self.wh..self.wh + self.hidden * g], self.hidden, g, rng);
        params[self.bias..self.bias + g].fill(T::zero());
    }

    pub fn zero_state<T: Scalar>(&self) -> LstmState<T> {
        LstmState {
            h: vec![T::zero(); self.hidden],
            c: vec![T::zero(); self.hidden],
        }
    }

    fn gate_block<'a, T>(&self, params: &'a [T], offset: usize, rows: usize) -> &'a [T] {
        &params[offset..offset + rows * 4 * self.hidden]
    }

    /// Adds `x W` to `z` for a single row vector `x`.
    fn add_vec_mat<T: Scalar>(z: &mut [T], x: &[T], w: &[T]) {
        let cols = z.len();
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (zj, &wj) in z.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
                *zj += xi * wj;
            }
        }
    }

    /// Applies the gate nonlinearities in place and advances `(h, c)`.
    fn cell_update<T: Scalar>(&self, z: &mut [T], c_prev: &[T], c: &mut [T], ct: &mut [T], h: &mut [T]) {
        let n = self.hidden;
        for j in 0..n {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[n + j]);
            let g = z[2 * n + j].tanh();
            let o = sigmoid(z[3 * n + j]);
            z[j] = i;
            z[n + j] = f;
            z[2 * n + j] = g;
            z[3 * n + j] = o;
            c[j] = f * c_prev[j] + i * g;
            ct[j] = c[j].tanh();
            h[j] = o * ct[j];
        }
    }

    /// Advances `state` by one input.
    pub fn step<T: Scalar>(&self, params: &[T], state: &mut LstmState<T>, x: &[T]) {
        let g = 4 * self.hidden;
        let mut z = params[self.bias..self.bias + g].to_vec();
        Self::add_vec_mat(&mut z, x, self.gate_block(params, self.wx, self.input));
        Self::add_vec_mat(&mut z, &state.h, self.gate_block(params, self.wh, self.hidden));
        let c_prev = std::mem::take(&mut state.c);
        let mut c = vec![T::zero(); self.hidden];
        let mut ct = vec![T::zero(); self.hidden];
        self.cell_update(&mut z, &c_prev, &mut c, &mut ct, &mut state.h);
        state.c = c;
    }

    /// Runs every sequence from a zero state. `starts` lists the first row of each sequence.
    pub fn forward_batch<T: Scalar>(&self, params: &[T], inputs: Matrix<T>, starts: &[usize]) -> LstmCache<T> {
        let m = inputs.rows();
        let n = self.hidden;
        let g = 4 * n;
        let mut gates = Matrix::zeros(m, g);
        for r in 0..m {
            gates.row_mut(r).copy_from_slice(&params[self.bias..self.bias + g]);
        }
        T::gemm(
            m,
            self.input,
            g,
            T::one(),
            inputs.as_slice(),
            self.input as isize,
            1,
            self.gate_block(params, self.wx, self.input),
            g as isize,
            1,
            T::one(),
            gates.as_mut_slice(),
            g as isize,
            1,
        );
        let wh = self.gate_block(params, self.wh, self.hidden);
        let mut cell = Matrix::zeros(m, n);
        let mut cell_tanh = Matrix::zeros(m, n);
        let mut hidden = Matrix::zeros(m, n);
        let zero = vec![T::zero(); n];
        for (s, e) in sequence_bounds(starts, m) {
            for t in s..e {
                let (h_prev, c_prev) = if t == s {
                    (zero.clone(), zero.clone())
                } else {
                    (hidden.row(t - 1).to_vec(), cell.row(t - 1).to_vec())
                };
                let z = gates.row_mut(t);
                Self::add_vec_mat(z, &h_prev, wh);
                let mut c = vec![T::zero(); n];
                let mut ct = vec![T::zero(); n];
                let mut h = vec![T::zero(); n];
                self.cell_update(z, &c_prev, &mut c, &mut ct, &mut h);
                cell.row_mut(t).copy_from_slice(&c);
                cell_tanh.row_mut(t).copy_from_slice(&ct);
                hidden.row_mut(t).copy_from_slice(&h);
            }
        }
        LstmCache {
            inputs,
            gates,
            cell,
            cell_tanh,
            hidden,
            starts: starts.to_vec(),
        }
    }

    /// Backpropagation through time of `d_hidden` (`rows x H`) into `grad`.
    pub fn backward_batch<T: Scalar>(&self, params: &[T], cache: &LstmCache<T>, d_hidden: &Matrix<T>, grad: &mut [T]) {
        let m = d_hidden.rows();
        let n = self.hidden;
        let g = 4 * n;
        let wh = self.gate_block(params, self.wh, self.hidden);
        let mut dz_all = Matrix::zeros(m, g);
        let one = T::one();
        for (s, e) in sequence_bounds(&cache.starts, m) {
            let mut dh_next = vec![T::zero(); n];
            let mut dc_next = vec![T::zero(); n];
            for t in (s..e).rev() {
                let gate = cache.gates.row(t);
                let ct = cache.cell_tanh.row(t);
                let dz = dz_all.row_mut(t);
                for j in 0..n {
                    let (i, f, gg, o) = (gate[j], gate[n + j], gate[2 * n + j], gate[3 * n + j]);
                    let dh = d_hidden[(t, j)] + dh_next[j];
                    let dc = dc_next[j] + dh * o * (one - ct[j] * ct[j]);
                    let c_prev = if t == s { T::zero() } else { cache.cell[(t - 1, j)] };
                    dz[j] = dc * gg * i * (one - i);
                    dz[n + j] = dc * c_prev * f * (one - f);
                    dz[2 * n + j] = dc * i * (one - gg * gg);
                    dz[3 * n + j] = dh * ct[j] * o * (one - o);
                    dc_next[j] = dc * f;
                }
                // dh_prev = dz Wh^T, dWh += h_prev^T dz
                if t > s {
                    let dz = dz_all.row(t);
                    let gwh = &mut grad[self.wh..self.wh + n * g];
                    for k in 0..n {
                        let wrow = &wh[k * g..(k + 1) * g];
                        let mut acc = T::zero();
                        for (w, d) in wrow.iter().zip(dz) {
                            acc += *w * *d;
                        }
                        dh_next[k] = acc;
                        let hp = cache.hidden[(t - 1, k)];
                        if hp != T::zero() {
                            for (gw, d) in gwh[k * g..(k + 1) * g].iter_mut().zip(dz) {
                                *gw += hp * *d;
                            }
                        }
                    }
                }
            }
        }
        T::gemm(
            self.input,
            m,
            g,
            one,
            cache.inputs.as_slice(),
            1,
            self.input as isize,
            dz_all.as_slice(),
            g as isize,
            1,
            one,
            &mut grad[self.wx..self.wx + self.input * g],
            g as isize,
            1,
        );
        let gb = &mut grad[self.bias..self.bias + g];
        for r in 0..m {
            for (b, d) in gb.iter_mut().zip(dz_all.row(r)) {
                *b += *d;
            }
        }
    }

    /// Directional derivative of the hidden outputs along parameter direction `v`.
    pub fn jvp_batch<T: Scalar>(&self, params: &[T], cache: &LstmCache<T>, v: &[T]) -> Matrix<T> {
        let m = cache.inputs.rows();
        let n = self.hidden;
        let g = 4 * n;
        let mut dz_all = Matrix::zeros(m, g);
        for r in 0..m {
            dz_all.row_mut(r).copy_from_slice(&v[self.bias..self.bias + g]);
        }
        T::gemm(
            m,
            self.input,
            g,
            T::one(),
            cache.inputs.as_slice(),
            self.input as isize,
            1,
            self.gate_block(v, self.wx, self.input),
            g as isize,
            1,
            T::one(),
            dz_all.as_mut_slice(),
            g as isize,
            1,
        );
        let wh = self.gate_block(params, self.wh, self.hidden);
        let vwh = self.gate_block(v, self.wh, self.hidden);
        let mut dh_out = Matrix::zeros(m, n);
        let one = T::one();
        for (s, e) in sequence_bounds(&cache.starts, m) {
            let mut dh_prev = vec![T::zero(); n];
            let mut dc_prev = vec![T::zero(); n];
            for t in s..e {
                let dz = dz_all.row_mut(t);
                if t > s {
                    Self::add_vec_mat(dz, &dh_prev, wh);
                    Self::add_vec_mat(dz, cache.hidden.row(t - 1), vwh);
                }
                let gate = cache.gates.row(t);
                let ct = cache.cell_tanh.row(t);
                for j in 0..n {
                    let (i, f, gg, o) = (gate[j], gate[n + j], gate[2 * n + j], gate[3 * n + j]);
                    let di = i * (one - i) * dz[j];
                    let df = f * (one - f) * dz[n + j];
                    let dg = (one - gg * gg) * dz[2 * n + j];
                    let d_o = o * (one - o) * dz[3 * n + j];
                    let c_prev = if t == s { T::zero() } else { cache.cell[(t - 1, j)] };
                    let dc = df * c_prev + f * dc_prev[j] + di * gg + i * dg;
                    let dh = d_o * ct[j] + o * (one - ct[j] * ct[j]) * dc;
                    dc_prev[j] = dc;
                    dh_prev[j] = dh;
                    dh_out[(t, j)] = dh;
                }
            }
        }
        dh_out
    }
}

/// `(start, end)` row ranges of consecutive sequences.
pub(crate) fn sequence_bounds(starts: &[usize], rows: usize) -> Vec<(usize, usize)> {
    starts
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, starts.get(k + 1).copied().unwrap_or(rows)))
        .filter(|(s, e)| s < e)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Lstm, Vec<f64>, Matrix<f64>, Vec<usize>) {
        let mut layout = ParamLayout::new();
        let cell = Lstm::new(2, 3, &mut layout, "rnn");
        let mut rng = SeededRng::new(2, 0);
        let p: Vec<f64> = (0..layout.total()).map(|_| 0.6 * rng.normal::<f64>()).collect();
        let x: Vec<f64> = (0..2 * 7).map(|_| rng.normal()).collect();
        (cell, p, Matrix::from_vec(7, 2, x), vec![0, 4])
    }

    fn weighted_sum(cell: &Lstm, p: &[f64], x: &Matrix<f64>, starts: &[usize], w: &Matrix<f64>) -> f64 {
        let cache = cell.forward_batch(p, x.clone(), starts);
        cache
            .hidden
            .as_slice()
            .iter()
            .zip(w.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    #[test]
    fn batch_matches_stepping() {
        let (cell, p, x, starts) = setup();
        let cache = cell.forward_batch(&p, x.clone(), &starts);
        for (s, e) in sequence_bounds(&starts, 7) {
            let mut st = cell.zero_state();
            for t in s..e {
                cell.step(&p, &mut st, x.row(t));
                for j in 0..3 {
                    assert!((st.h[j] - cache.hidden[(t, j)]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let (cell, p, x, starts) = setup();
        let mut rng = SeededRng::new(3, 0);
        let w = Matrix::from_vec(7, 3, (0..21).map(|_| rng.normal()).collect());
        let cache = cell.forward_batch(&p, x.clone(), &starts);
        let mut g = vec![0.0; p.len()];
        cell.backward_batch(&p, &cache, &w, &mut g);
        let h = 1e-6;
        for i in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (weighted_sum(&cell, &a, &x, &starts, &w) - weighted_sum(&cell, &b, &x, &starts, &w)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn jvp_matches_finite_differences() {
        let (cell, p, x, starts) = setup();
        let mut rng = SeededRng::new(4, 0);
        let v: Vec<f64> = (0..p.len()).map(|_| rng.normal()).collect();
        let cache = cell.forward_batch(&p, x.clone(), &starts);
        let t = cell.jvp_batch(&p, &cache, &v);
        let h = 1e-6;
        let at = |s: f64| {
            let q: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            cell.forward_batch(&q, x.clone(), &starts).hidden
        };
        let (a, b) = (at(h), at(-h));
        for i in 0..t.as_slice().len() {
            let fd = (a.as_slice()[i] - b.as_slice()[i]) / (2.0 * h);
            assert!((fd - t.as_slice()[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn bounds_skip_empty() {
        assert_eq!(sequence_bounds(&[0, 3, 3], 5), vec![(0, 3), (3, 5)]);
    }
}
