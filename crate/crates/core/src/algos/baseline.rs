use crate::error::{check_dim, Result};
use crate::linalg::{cholesky_solve, dot, Matrix};
use crate::scalar::Scalar;

/// `concat(s, s*s, 0.01 t, (0.01 t)^2, (0.01 t)^3, 1)`.
pub fn baseline_features<T: Scalar>(obs: &[T], t: usize) -> Vec<T> {
    let mut f = Vec::with_capacity(2 * obs.len() + 4);
    f.extend_from_slice(obs);
    f.extend(obs.iter().map(|&x| x * x));
    let u = T::lit(0.01 * t as f64);
    f.extend_from_slice(&[u, u * u, u * u * u, T::one()]);
    f
}

/// Time-varying linear return predictor, refit by ridge regression on each batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearBaseline<T> {
    pub coefficients: Vec<T>,
    pub ridge: T,
}

impl<T: Scalar> LinearBaseline<T> {
    pub fn new(obs_dim: usize) -> Self {
        Self {
            coefficients: vec![T::zero(); 2 * obs_dim + 4],
            ridge: T::lit(1e-5),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict(&self, obs: &[T], t: usize) -> T {
        dot(&self.coefficients, &baseline_features(obs, t))
    }

    /// Least squares of `targets` on the features of `(obs[i], times[i])`, with ridge `1e-5`.
    pub fn fit<R: AsRef<[T]>>(&mut self, obs: &[R], times: &[usize], targets: &[T]) -> Result<()> {
        check_dim("baseline times", obs.len(), times.len())?;
        check_dim("baseline targets", obs.len(), targets.len())?;
        let k = self.feature_dim();
        let mut gram = Matrix::zeros(k, k);
        let mut rhs = vec![T::zero(); k];
        let mut feats = Vec::with_capacity(obs.len() * k);
        for (o, &t) in obs.iter().zip(times) {
            let f = baseline_features(o.as_ref(), t);
            check_dim("baseline feature", k, f.len())?;
            feats.extend_from_slice(&f);
        }
        let x = Matrix::from_vec(obs.len(), k, feats);
        T::gemm(
            k,
            obs.len(),
            k,
            T::one(),
            x.as_slice(),
            1,
            k as isize,
            x.as_slice(),
            k as isize,
            1,
            T::zero(),
            gram.as_mut_slice(),
            k as isize,
            1,
        );
        for (r, &y) in targets.iter().enumerate() {
            for (acc, &f) in rhs.iter_mut().zip(x.row(r)) {
                *acc += f * y;
            }
        }
        for i in 0..k {
            gram[(i, i)] += self.ridge;
        }
        self.coefficients = cholesky_solve(&gram, &rhs)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn feature_examples() {
        assert_eq!(baseline_features(&[2.0f64], 0), vec![2.0, 4.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(baseline_features(&[0.0f64; 4], 3).len(), 12);
        let f = baseline_features(&[1.0f64, -1.0], 100);
        assert_eq!(f.len(), 8);
        assert_eq!(f[..2], [1.0, -1.0]);
        for v in &f[2..] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    fn problem(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = SeededRng::new(seed, 0);
        let obs = (0..n).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let times = (0..n).map(|i| (i * 7) % 500).collect();
        (obs, times)
    }

    #[test]
    fn realizable_targets_recovered() {
        let (obs, times) = problem(1000, 1);
        let truth = [0.5, -1.0, 0.25, 2.0, 3.0, -1.5, 0.7, 4.0];
        let y: Vec<f64> = obs
            .iter()
            .zip(&times)
            .map(|(o, &t)| dot(&truth, &baseline_features(o, t)))
            .collect();
        let mut b = LinearBaseline::new(2);
        b.fit(&obs, &times, &y).unwrap();
        for ((o, &t), &target) in obs.iter().zip(&times).zip(&y) {
            assert!((b.predict(o, t) - target).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_targets() {
        let (obs, times) = problem(100, 2);
        let mut b = LinearBaseline::new(2);
        b.fit(&obs, &times, &vec![7.0; 100]).unwrap();
        for (o, &t) in obs.iter().zip(&times) {
            assert!((b.predict(o, t) - 7.0).abs() < 1e-4);
        }
    }

    #[test]
    fn matches_dense_normal_equations() {
        // Independent route: nalgebra LU on the explicitly built regularized normal equations.
        let (obs, times) = problem(30, 3);
        let mut rng = SeededRng::new(4, 0);
        let y: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
        let mut b = LinearBaseline::new(2);
        b.fit(&obs, &times, &y).unwrap();
        let x = nalgebra::DMatrix::from_fn(30, 8, |r, c| baseline_features(&obs[r], times[r])[c]);
        let a = x.transpose() * &x + nalgebra::DMatrix::identity(8, 8) * 1e-5;
        let rhs = x.transpose() * nalgebra::DVector::from_vec(y);
        let w = a.lu().solve(&rhs).unwrap();
        for i in 0..8 {
            assert!((w[i] - b.coefficients[i]).abs() < 1e-8 * (1.0 + w[i].abs()));
        }
    }
}
