//! Cross-entropy method with a diagonal Gaussian search distribution.

use crate::error::{check_dim, Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct CemConfig<T> {
    /// Population for [`Cem::iterate`]; the harness instead samples until its step budget is spent.
    pub population: usize,
    pub elite_fraction: T,
    pub init_std: T,
    /// Initial extra variance, decayed linearly to zero over `extra_noise_iters` updates.
    pub extra_noise: T,
    pub extra_noise_iters: usize,
}

impl<T: Scalar> Default for CemConfig<T> {
    fn default() -> Self {
        Self {
            population: 100,
            elite_fraction: T::lit(0.2),
            init_std: T::one(),
            extra_noise: T::lit(0.1),
            extra_noise_iters: 500,
        }
    }
}

impl<T: Scalar> CemConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.elite_fraction > T::zero() && self.elite_fraction <= T::one()) {
            return Err(Error::Config("elite_fraction must lie in (0, 1]".into()));
        }
        if !(self.init_std > T::zero()) || self.extra_noise < T::zero() {
            return Err(Error::Config(
                "init_std must be positive and extra_noise non-negative".into(),
            ));
        }
        if self.population < 2 {
            return Err(Error::Config("CEM population must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cem<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub iteration: usize,
    pub config: CemConfig<T>,
}

impl<T: Scalar> Cem<T> {
    pub fn new(mean: Vec<T>, config: CemConfig<T>) -> Result<Self> {
        config.validate()?;
        let v = config.init_std * config.init_std;
        Ok(Self {
            var: vec![v; mean.len()],
            mean,
            iteration: 0,
            config,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn extra_noise(&self) -> T {
        let n = self.config.extra_noise_iters.max(1) as f64;
        let frac = (1.0 - self.iteration as f64 / n).max(0.0);
        self.config.extra_noise * T::lit(frac)
    }

    pub fn sample(&self, rng: &mut SeededRng) -> Vec<T> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(&m, &v)| m + v.sqrt() * rng.normal::<T>())
            .collect()
    }

    /// Number of elites kept out of `n` evaluated samples.
    pub fn elite_count(&self, n: usize) -> usize {
        ((T::lit(n as f64) * self.config.elite_fraction).floor().as_f64() as usize).clamp(1, n)
    }

    /// Indices of the elite set: highest returns first, ties to the earlier sample.
    pub fn elites(&self, returns: &[T]) -> Result<Vec<usize>> {
        let mut idx: Vec<usize> = (0..returns.len()).filter(|&i| returns[i].is_finite()).collect();
        if idx.is_empty() {
            return Err(Error::NonFinite("every CEM evaluation"));
        }
        idx.sort_by(|&a, &b| returns[b].partial_cmp(&returns[a]).expect("finite").then(a.cmp(&b)));
        idx.truncate(self.elite_count(idx.len()));
        Ok(idx)
    }

    /// Refits mean and diagonal variance on the elites, then adds the extra noise.
    pub fn update(&mut self, samples: &[Vec<T>], returns: &[T]) -> Result<()> {
        check_dim("CEM returns", samples.len(), returns.len())?;
        for s in samples {
            check_dim("CEM sample", self.dim(), s.len())?;
        }
        let elites = self.elites(returns)?;
        let k = T::lit(elites.len() as f64);
        let extra = self.extra_noise();
        for d in 0..self.dim() {
            let mean = elites.iter().map(|&i| samples[i][d]).sum::<T>() / k;
            let var = elites.iter().map(|&i| (samples[i][d] - mean).powi(2)).sum::<T>() / k;
            self.mean[d] = mean;
            self.var[d] = var + extra;
        }
        self.iteration += 1;
        Ok(())
    }

    /// One generation of `config.population` samples, one evaluation each.
    /// Returns the best value seen.
    pub fn iterate(&mut self, mut evaluate: impl FnMut(&[T]) -> T, rng: &mut SeededRng) -> Result<T> {
        let samples: Vec<Vec<T>> = (0..self.config.population).map(|_| self.sample(rng)).collect();
        let returns: Vec<T> = samples.iter().map(|s| evaluate(s)).collect();
        self.update(&samples, &returns)?;
        Ok(returns
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .fold(T::neg_infinity(), T::max))
    }

    /// Flat snapshot `[iteration, mean.., var..]`.
    pub fn state(&self) -> Vec<T> {
        let mut s = vec![T::lit(self.iteration as f64)];
        s.extend_from_slice(&self.mean);
        s.extend_from_slice(&self.var);
        s
    }

    pub fn load_state(&mut self, state: &[T]) -> Result<()> {
        check_dim("CEM state", 1 + 2 * self.dim(), state.len())?;
        let n = self.dim();
        self.iteration = state[0].as_f64() as usize;
        self.mean.copy_from_slice(&state[1..1 + n]);
        self.var.copy_from_slice(&state[1 + n..]);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(population: usize, q: f64, std: f64, noise: f64) -> CemConfig<f64> {
        CemConfig {
            population,
            elite_fraction: q,
            init_std: std,
            extra_noise: noise,
            extra_noise_iters: 10,
        }
    }

    #[test]
    fn full_elite_set_mean() {
        let mut c = Cem::new(vec![0.0, 0.0], cfg(4, 1.0, 1.0, 0.0)).unwrap();
        let s = vec![vec![1.0, 2.0], vec![-1.0, -2.0], vec![3.0, 0.0], vec![-3.0, 0.0]];
        c.update(&s, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.mean, vec![0.0, 0.0]);
        assert_eq!(c.var, vec![5.0, 2.0]);
    }

    #[test]
    fn rank_based_selection() {
        let s: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let r: Vec<f64> = (0..10).map(|i| ((i * 7) % 10) as f64 - 4.0).collect();
        let mut a = Cem::new(vec![0.0, 0.0], cfg(10, 0.3, 1.0, 0.01)).unwrap();
        let mut b = a.clone();
        a.update(&s, &r).unwrap();
        b.update(&s, &r.iter().map(|x| 3.0 * x).collect::<Vec<_>>()).unwrap();
        assert_eq!(a, b);
        let mut c = Cem::new(vec![0.0, 0.0], cfg(10, 0.3, 1.0, 0.01)).unwrap();
        c.update(&s, &r.iter().map(|x: &f64| x.exp()).collect::<Vec<_>>())
            .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn non_finite_evaluations_excluded() {
        let mut c = Cem::new(vec![0.0], cfg(3, 0.5, 1.0, 0.0)).unwrap();
        c.update(&[vec![1.0], vec![5.0], vec![2.0]], &[1.0, f64::NAN, 0.0])
            .unwrap();
        assert_eq!(c.mean, vec![1.0]);
        assert!(c.update(&[vec![1.0]], &[f64::INFINITY]).is_err());
    }

    #[test]
    fn extra_noise_decays_linearly() {
        let mut c = Cem::new(vec![0.0], cfg(2, 0.5, 1.0, 0.1)).unwrap();
        assert_eq!(c.extra_noise(), 0.1);
        c.iteration = 5;
        assert!((c.extra_noise() - 0.05).abs() < 1e-15);
        c.iteration = 20;
        assert_eq!(c.extra_noise(), 0.0);
    }

    #[test]
    fn quadratic_optimum_found() {
        let target = [0.5, -1.0, 1.5, 0.0, -0.5];
        let mut c = Cem::new(vec![0.0; 5], cfg(100, 0.2, 1.0, 0.0)).unwrap();
        let mut rng = SeededRng::new(7, 0);
        let f = |x: &[f64]| -x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut vars = vec![c.var.clone()];
        for _ in 0..50 {
            c.iterate(f, &mut rng).unwrap();
            vars.push(c.var.clone());
        }
        let err: f64 = c
            .mean
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-2, "distance {err}");
        for d in 0..5 {
            assert!(vars[50][d] < vars[25][d] && vars[25][d] < vars[0][d]);
        }
    }

    #[test]
    fn state_round_trip() {
        let mut c = Cem::new(vec![1.0, 2.0], cfg(4, 0.5, 0.3, 0.1)).unwrap();
        c.iteration = 3;
        let s = c.state();
        let mut d = Cem::new(vec![0.0, 0.0], cfg(4, 0.5, 0.3, 0.1)).unwrap();
        d.load_state(&s).unwrap();
        assert_eq!(c, d);
    }
}
