//! (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation.
//!
//! The search distribution is kept in `f64` whatever the outer scalar type.
//! Memory is two dense `n x n` matrices, so the dimension is capped by
//! [`CmaEsConfig::max_params`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct CmaEsConfig {
    pub sigma0: f64,
    /// Defaults to `4 + floor(3 ln n)`.
    pub population: Option<usize>,
    pub max_params: usize,
}

impl Default for CmaEsConfig {
    fn default() -> Self {
        Self {
            sigma0: 0.1,
            population: None,
            max_params: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CmaEs {
    n: usize,
    lambda: usize,
    weights: Vec<f64>,
    mueff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    pc: DVector<f64>,
    ps: DVector<f64>,
    pub generation: usize,
    pub evaluations: usize,
    eigen_at: usize,
    /// Eigenvalue floor repairs performed so far.
    pub repairs: usize,
}

impl CmaEs {
    pub fn new<T: Scalar>(mean: &[T], config: &CmaEsConfig) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::Config("CMA-ES needs at least one parameter".into()));
        }
        if n > config.max_params {
            return Err(Error::Config(format!(
                "CMA-ES keeps two dense {n}x{n} matrices; {n} parameters exceeds the cap of {}",
                config.max_params
            )));
        }
        if !(config.sigma0 > 0.0) {
            return Err(Error::Config("CMA-ES sigma0 must be positive".into()));
        }
        let nf = n as f64;
        let lambda = config.population.unwrap_or(4 + (3.0 * nf.ln()).floor() as usize);
        if lambda < 4 {
            return Err(Error::Config("CMA-ES population must be at least 4".into()));
        }
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (lambda as f64 / 2.0 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Ok(Self {
            n,
            lambda,
            weights,
            mueff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
            mean: DVector::from_iterator(n, mean.iter().map(|v| v.as_f64())),
            sigma: config.sigma0,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            pc: DVector::zeros(n),
            ps: DVector::zeros(n),
            generation: 0,
            evaluations: 0,
            eigen_at: 0,
            repairs: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn population(&self) -> usize {
        self.lambda
    }

    pub fn mean_as<T: Scalar>(&self) -> Vec<T> {
        self.mean.iter().map(|&v| T::lit(v)).collect()
    }

    /// Draws `m + sigma * B D z`.
    pub fn sample<T: Scalar>(&self, rng: &mut SeededRng) -> Vec<T> {
        let z = DVector::from_iterator(self.n, (0..self.n).map(|_| rng.normal::<f64>()));
        let y = &self.basis * z.component_mul(&self.scales);
        self.mean
            .iter()
            .zip(y.iter())
            .map(|(&m, &yi)| T::lit(m + self.sigma * yi))
            .collect()
    }

    /// Updates the distribution from one generation of `lambda` candidates; higher fitness is better.
    pub fn tell<T: Scalar>(&mut self, candidates: &[Vec<T>], fitness: &[T]) -> Result<()> {
        check_dim("CMA-ES generation", self.lambda, candidates.len())?;
        check_dim("CMA-ES fitness", self.lambda, fitness.len())?;
        for c in candidates {
            check_dim("CMA-ES candidate", self.n, c.len())?;
        }
        let mut order: Vec<usize> = (0..self.lambda).filter(|&i| fitness[i].is_finite()).collect();
        if order.len() < self.weights.len() {
            return Err(Error::NonFinite("CMA-ES fitness values"));
        }
        order.sort_by(|&a, &b| fitness[b].partial_cmp(&fitness[a]).expect("finite").then(a.cmp(&b)));
        let n = self.n;
        let mu = self.weights.len();
        let mut ys = DMatrix::zeros(n, mu);
        for (k, &i) in order.iter().take(mu).enumerate() {
            for d in 0..n {
                ys[(d, k)] = (candidates[i][d].as_f64() - self.mean[d]) / self.sigma;
            }
        }
        let w = DVector::from_column_slice(&self.weights);
        let yw = &ys * &w;
        self.mean += &yw * self.sigma;
        self.evaluations += self.lambda;
        self.generation += 1;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let whitened = &self.basis * self.basis.tr_mul(&yw).component_div(&self.scales);
        self.ps = &self.ps * (1.0 - self.cs) + whitened * (self.cs * (2.0 - self.cs) * self.mueff).sqrt();
        let ps_norm = self.ps.norm();
        let decay = 1.0 - (1.0 - self.cs).powi(2 * self.generation as i32);
        let hsig = ps_norm / decay.max(1e-300).sqrt() / self.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        self.pc = &self.pc * (1.0 - self.cc) + &yw * (hs * (self.cc * (2.0 - self.cc) * self.mueff).sqrt());

        let mut yw_scaled = ys.clone();
        for (k, &wk) in self.weights.iter().enumerate() {
            yw_scaled.column_mut(k).scale_mut(wk);
        }
        let rank_mu = &yw_scaled * ys.transpose();
        let old = (1.0 - self.c1 - self.cmu) + self.c1 * (1.0 - hs) * self.cc * (2.0 - self.cc);
        self.cov *= old;
        self.cov.ger(self.c1, &self.pc, &self.pc, 1.0);
        self.cov += rank_mu * self.cmu;

        self.sigma *= ((self.cs / self.damps) * (ps_norm / self.chi_n - 1.0)).exp();
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::Numerical(format!("CMA-ES step size became {}", self.sigma)));
        }
        let gap = self.lambda as f64 / (self.c1 + self.cmu) / n as f64 / 10.0;
        if (self.evaluations - self.eigen_at) as f64 > gap {
            self.decompose()?;
        }
        Ok(())
    }

    /// Symmetrises `C`, refreshes `B` and `D`, and floors tiny eigenvalues.
    pub fn decompose(&mut self) -> Result<()> {
        self.eigen_at = self.evaluations;
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        if sym.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("CMA-ES covariance"));
        }
        let eig = SymmetricEigen::new(sym.clone());
        let max = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
        let floor = max * 1e-14;
        let mut vals = eig.eigenvalues.clone();
        let mut repaired = false;
        for v in vals.iter_mut() {
            if *v < floor {
                *v = floor;
                repaired = true;
            }
        }
        if repaired {
            self.repairs += 1;
            log::warn!("CMA-ES covariance eigenvalues floored at {floor:e}");
            self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        } else {
            self.cov = sym;
        }
        self.scales = vals.map(f64::sqrt);
        self.basis = eig.eigenvectors;
        Ok(())
    }

    /// Samples, evaluates and updates one generation; returns the best fitness.
    pub fn iterate<T: Scalar>(&mut self, mut evaluate: impl FnMut(&[T]) -> T, rng: &mut SeededRng) -> Result<T> {
        let cands: Vec<Vec<T>> = (0..self.lambda).map(|_| self.sample(rng)).collect();
        let fit: Vec<T> = cands.iter().map(|c| evaluate(c)).collect();
        self.tell(&cands, &fit)?;
        Ok(fit
            .iter()
            .copied()
            .filter(|f| f.is_finite())
            .fold(T::neg_infinity(), T::max))
    }

    /// Flat snapshot `[generation, evaluations, eigen_at, repairs, sigma, mean, pc, ps, D, C, B]`.
    pub fn state(&self) -> Vec<f64> {
        let mut s = vec![
            self.generation as f64,
            self.evaluations as f64,
            self.eigen_at as f64,
            self.repairs as f64,
            self.sigma,
        ];
        for v in [&self.mean, &self.pc, &self.ps, &self.scales] {
            s.extend(v.iter());
        }
        s.extend(self.cov.iter());
        s.extend(self.basis.iter());
        s
    }

    pub fn load_state(&mut self, state: &[f64]) -> Result<()> {
        let n = self.n;
        check_dim("CMA-ES state", 5 + 4 * n + 2 * n * n, state.len())?;
        self.generation = state[0] as usize;
        self.evaluations = state[1] as usize;
        self.eigen_at = state[2] as usize;
        self.repairs = state[3] as usize;
        self.sigma = state[4];
        let vec_at = |k: usize| DVector::from_column_slice(&state[5 + k * n..5 + (k + 1) * n]);
        self.mean = vec_at(0);
        self.pc = vec_at(1);
        self.ps = vec_at(2);
        self.scales = vec_at(3);
        let m0 = 5 + 4 * n;
        self.cov = DMatrix::from_column_slice(n, n, &state[m0..m0 + n * n]);
        self.basis = DMatrix::from_column_slice(n, n, &state[m0 + n * n..]);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        -x.iter().map(|v| v * v).sum::<f64>()
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        -(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2))
    }

    fn cfg(sigma0: f64) -> CmaEsConfig {
        CmaEsConfig {
            sigma0,
            ..CmaEsConfig::default()
        }
    }

    #[test]
    fn default_population() {
        assert_eq!(CmaEs::new(&[0.0f64; 2], &cfg(1.0)).unwrap().population(), 6);
        assert_eq!(CmaEs::new(&[0.0f64; 10], &cfg(1.0)).unwrap().population(), 10);
        assert!(CmaEs::new(&vec![0.0f64; 10_001], &cfg(1.0)).is_err());
    }

    #[test]
    fn sphere_within_budget() {
        let mut es = CmaEs::new(&[3.0f64, 3.0], &cfg(0.5)).unwrap();
        let mut rng = SeededRng::new(1, 0);
        while es.evaluations + es.population() <= 300 {
            es.iterate(sphere, &mut rng).unwrap();
        }
        assert!(es.mean.norm() < 1e-3, "mean {:?} after {}", es.mean, es.evaluations);
    }

    #[test]
    fn rosenbrock_within_budget() {
        let mut es = CmaEs::new(&[-1.0f64, 1.0], &cfg(0.5)).unwrap();
        let mut rng = SeededRng::new(2, 0);
        let mut best = f64::NEG_INFINITY;
        while es.evaluations + es.population() <= 5000 {
            best = best.max(es.iterate(rosenbrock, &mut rng).unwrap());
        }
        let at_mean = -rosenbrock(&[es.mean[0], es.mean[1]]);
        assert!(at_mean < 1e-3, "objective {at_mean}");
        assert!(-best < 1e-3);
    }

    #[test]
    fn monotone_transform_invariant() {
        let mut a = CmaEs::new(&[1.0f64, -2.0, 0.5], &cfg(0.3)).unwrap();
        let mut b = a.clone();
        let mut ra = SeededRng::new(5, 0);
        let mut rb = SeededRng::new(5, 0);
        for _ in 0..30 {
            a.iterate(sphere, &mut ra).unwrap();
            b.iterate(|x: &[f64]| (sphere(x) * 0.1).exp() * 7.0 - 3.0, &mut rb)
                .unwrap();
        }
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.cov, b.cov);
        assert_eq!(a.sigma, b.sigma);
    }

    #[test]
    fn covariance_stays_positive_definite() {
        let mut es = CmaEs::new(&[0.5f64; 4], &cfg(1.0)).unwrap();
        let mut rng = SeededRng::new(3, 0);
        let f = |x: &[f64]| -(x[0] * x[0] + 100.0 * x[1] * x[1] + (x[2] - x[3]).powi(2) * 10.0 + x[3].abs());
        for _ in 0..100 {
            es.iterate(f, &mut rng).unwrap();
            let c = &es.cov;
            assert!((c - c.transpose()).amax() < 1e-12 * c.amax());
            let eig = SymmetricEigen::new(c.clone());
            assert!(eig.eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn state_round_trip() {
        let mut es = CmaEs::new(&[1.0f64, 2.0, 3.0], &cfg(0.2)).unwrap();
        let mut rng = SeededRng::new(4, 0);
        for _ in 0..5 {
            es.iterate(sphere, &mut rng).unwrap();
        }
        let mut other = CmaEs::new(&[0.0f64; 3], &cfg(0.2)).unwrap();
        other.load_state(&es.state()).unwrap();
        assert_eq!(other.state(), es.state());
        let mut ra = SeededRng::new(9, 0);
        let mut rb = SeededRng::new(9, 0);
        es.iterate(sphere, &mut ra).unwrap();
        other.iterate(sphere, &mut rb).unwrap();
        assert_eq!(other.state(), es.state());
    }
}
