use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, Matrix};
use crate::mdp::{Actor, Trajectory};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::gaussian;
use super::lstm::{Lstm, LstmCache, LstmState};
use super::mlp::{Activation, Mlp, MlpCache};
use super::params::ParamLayout;

/// Network shape of a Gaussian policy's mean.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicyArch {
    /// Feed-forward hidden layers followed by a linear output layer.
    Mlp { hidden: Vec<(usize, Activation)> },
    /// One recurrent layer over `(o_t, a_{t-1})` followed by a linear output layer.
    Lstm { hidden: usize },
}

impl PolicyArch {
    /// 100-50-25 units; tanh on the first two layers, linear on the third.
    pub fn default_mlp() -> Self {
        PolicyArch::Mlp {
            hidden: vec![
                (100, Activation::Tanh),
                (50, Activation::Tanh),
                (25, Activation::Identity),
            ],
        }
    }

    pub fn default_lstm() -> Self {
        PolicyArch::Lstm { hidden: 32 }
    }
}

impl fmt::Display for PolicyArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyArch::Mlp { hidden } => {
                let layers: Vec<String> = hidden.iter().map(|(n, a)| format!("{n}:{a}")).collect();
                write!(f, "mlp({})", layers.join(","))
            }
            PolicyArch::Lstm { hidden } => write!(f, "lstm({hidden})"),
        }
    }
}

impl FromStr for PolicyArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse policy architecture `{s}`"));
        let inner = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .map(str::to_string)
        };
        if let Some(body) = inner("lstm(") {
            let hidden = body.trim().parse().map_err(|_| bad())?;
            return Ok(PolicyArch::Lstm { hidden });
        }
        if let Some(body) = inner("mlp(") {
            let mut hidden = Vec::new();
            for part in body.split(',').filter(|p| !p.trim().is_empty()) {
                let (n, a) = part.trim().split_once(':').ok_or_else(bad)?;
                hidden.push((n.parse().map_err(|_| bad())?, a.parse()?));
            }
            return Ok(PolicyArch::Mlp { hidden });
        }
        Err(bad())
    }
}

/// Flattened timesteps of a batch of episodes.
#[derive(Clone, Debug)]
pub struct SequenceData<T> {
    pub observations: Matrix<T>,
    pub actions: Matrix<T>,
    /// First row of each episode, increasing, starting at 0.
    pub starts: Vec<usize>,
}

impl<T: Scalar> SequenceData<T> {
    pub fn new(observations: Matrix<T>, actions: Matrix<T>, starts: Vec<usize>) -> Result<Self> {
        check_dim("sequence rows", observations.rows(), actions.rows())?;
        if starts.first() != Some(&0) && observations.rows() > 0 {
            return Err(Error::Config("sequence starts must begin at row 0".into()));
        }
        if starts.windows(2).any(|w| w[0] > w[1]) || starts.iter().any(|&s| s > observations.rows()) {
            return Err(Error::Config("sequence starts must be sorted and in range".into()));
        }
        Ok(Self {
            observations,
            actions,
            starts,
        })
    }

    /// Every row is its own episode (only meaningful for feed-forward policies).
    pub fn from_rows(observations: Matrix<T>, actions: Matrix<T>) -> Result<Self> {
        let starts = (0..observations.rows()).collect();
        Self::new(observations, actions, starts)
    }

    pub fn from_trajectories(trajs: &[Trajectory<T>]) -> Result<Self> {
        let non_empty: Vec<&Trajectory<T>> = trajs.iter().filter(|t| !t.is_empty()).collect();
        let first = non_empty.first().ok_or(Error::Empty("trajectory batch"))?;
        let (od, ad) = (first.observations[0].len(), first.actions[0].len());
        let rows: usize = non_empty.iter().map(|t| t.len()).sum();
        let mut obs = Vec::with_capacity(rows * od);
        let mut act = Vec::with_capacity(rows * ad);
        let mut starts = Vec::with_capacity(non_empty.len());
        for t in non_empty {
            starts.push(obs.len() / od);
            for (o, a) in t.observations.iter().zip(&t.actions) {
                check_dim("trajectory observation", od, o.len())?;
                check_dim("trajectory action", ad, a.len())?;
                obs.extend_from_slice(o);
                act.extend_from_slice(a);
            }
        }
        Self::new(Matrix::from_vec(rows, od, obs), Matrix::from_vec(rows, ad, act), starts)
    }

    pub fn len(&self) -> usize {
        self.observations.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Body {
    Mlp(Mlp),
    Lstm { cell: Lstm, head: Mlp },
}

#[derive(Clone, Debug)]
enum BodyCache<T> {
    Mlp(MlpCache<T>),
    Lstm(LstmCache<T>, MlpCache<T>),
}

/// Cached batch pass of a policy.
#[derive(Clone, Debug)]
pub struct PolicyForward<T> {
    pub means: Matrix<T>,
    pub log_std: Vec<T>,
    cache: BodyCache<T>,
}

impl<T: Scalar> PolicyForward<T> {
    /// Per-row log-densities of `actions`.
    pub fn log_probs(&self, actions: &Matrix<T>) -> Vec<T> {
        (0..actions.rows())
            .map(|r| gaussian::log_prob_unchecked(self.means.row(r), &self.log_std, actions.row(r)))
            .collect()
    }
}

/// Per-episode rollout state of a Gaussian policy.
#[derive(Clone, Debug)]
pub struct PolicyMemory<T> {
    recurrent: Option<LstmState<T>>,
    prev_action: Vec<T>,
}

/// Diagonal Gaussian policy with a state-independent log standard deviation.
///
/// All parameters, including `log_std`, live in one flat vector; methods that
/// take an explicit `params` slice evaluate the same architecture at other
/// parameter values.
#[derive(Clone, Debug)]
pub struct GaussianPolicy<T> {
    arch: PolicyArch,
    obs_dim: usize,
    action_dim: usize,
    body: Body,
    layout: ParamLayout,
    log_std_offset: usize,
    params: Vec<T>,
}

impl<T: Scalar> GaussianPolicy<T> {
    /// Builds the architecture with all parameters zero.
    pub fn zeroed(arch: PolicyArch, obs_dim: usize, action_dim: usize) -> Result<Self> {
        if obs_dim == 0 || action_dim == 0 {
            return Err(Error::Config("policy dims must be positive".into()));
        }
        let mut layout = ParamLayout::new();
        let body = match &arch {
            PolicyArch::Mlp { hidden } => {
                let mut sizes = vec![obs_dim];
                let mut acts = Vec::new();
                for &(n, a) in hidden {
                    sizes.push(n);
                    acts.push(a);
                }
                sizes.push(action_dim);
                acts.push(Activation::Identity);
                Body::Mlp(Mlp::new(&sizes, &acts, &mut layout, "mean")?)
            }
            PolicyArch::Lstm { hidden } => {
                if *hidden == 0 {
                    return Err(Error::Config("recurrent width must be positive".into()));
                }
                let cell = Lstm::new(obs_dim + action_dim, *hidden, &mut layout, "lstm");
                let head = Mlp::new(&[*hidden, action_dim], &[Activation::Identity], &mut layout, "mean")?;
                Body::Lstm { cell, head }
            }
        };
        let log_std_offset = layout.push("log_std", 1, action_dim);
        let params = vec![T::zero(); layout.total()];
        Ok(Self {
            arch,
            obs_dim,
            action_dim,
            body,
            layout,
            log_std_offset,
            params,
        })
    }

    /// Xavier-uniform weights, zero biases, log standard deviation 0.
    pub fn new(arch: PolicyArch, obs_dim: usize, action_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut p = Self::zeroed(arch, obs_dim, action_dim)?;
        match &p.body {
            Body::Mlp(net) => net.init(&mut p.params, rng),
            Body::Lstm { cell, head } => {
                cell.init(&mut p.params, rng);
                head.init(&mut p.params, rng);
            }
        }
        Ok(p)
    }

    pub fn arch(&self) -> &PolicyArch {
        &self.arch
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.body, Body::Lstm { .. })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        check_dim("policy parameters", self.params.len(), params.len())?;
        if !all_finite(params) {
            return Err(Error::NonFinite("policy parameters"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn log_std_range(&self) -> std::ops::Range<usize> {
        self.log_std_offset..self.log_std_offset + self.action_dim
    }

    pub fn log_std<'a>(&self, params: &'a [T]) -> &'a [T] {
        &params[self.log_std_range()]
    }

    /// Self-describing architecture line, used in checkpoints.
    pub fn descriptor(&self) -> String {
        format!(
            "gaussian obs={} act={} arch={}",
            self.obs_dim, self.action_dim, self.arch
        )
    }

    pub fn from_descriptor(desc: &str) -> Result<Self> {
        let bad = || Error::Checkpoint(format!("unrecognized policy descriptor `{desc}`"));
        let mut parts = desc.split_whitespace();
        if parts.next() != Some("gaussian") {
            return Err(bad());
        }
        let mut field = |key: &str| -> Result<String> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(key))
                .map(str::to_string)
                .ok_or_else(bad)
        };
        let obs = field("obs=")?.parse().map_err(|_| bad())?;
        let act = field("act=")?.parse().map_err(|_| bad())?;
        let arch = field("arch=")?.parse()?;
        Self::zeroed(arch, obs, act)
    }

    /// Mean action for one observation, advancing the recurrent state.
    pub fn mean_step(&self, params: &[T], memory: &mut PolicyMemory<T>, obs: &[T]) -> Vec<T> {
        match &self.body {
            Body::Mlp(net) => net.forward(params, obs),
            Body::Lstm { cell, head } => {
                let mut x = obs.to_vec();
                x.extend_from_slice(&memory.prev_action);
                let state = memory.recurrent.as_mut().expect("recurrent memory");
                cell.step(params, state, &x);
                head.forward(params, &state.h)
            }
        }
    }

    pub fn start_memory(&self) -> PolicyMemory<T> {
        PolicyMemory {
            recurrent: match &self.body {
                Body::Mlp(_) => None,
                Body::Lstm { cell, .. } => Some(cell.zero_state()),
            },
            prev_action: vec![T::zero(); self.action_dim],
        }
    }

    /// Batch pass at `params`.
    pub fn forward(&self, params: &[T], data: &SequenceData<T>) -> Result<PolicyForward<T>> {
        check_dim("policy parameters", self.params.len(), params.len())?;
        check_dim("observation width", self.obs_dim, data.observations.cols())?;
        check_dim("action width", self.action_dim, data.actions.cols())?;
        if data.is_empty() {
            return Err(Error::Empty("policy batch"));
        }
        let (means, cache) = match &self.body {
            Body::Mlp(net) => {
                let c = net.forward_batch(params, data.observations.clone());
                (c.output().clone(), BodyCache::Mlp(c))
            }
            Body::Lstm { cell, head } => {
                let inputs = self.recurrent_inputs(data);
                let lc = cell.forward_batch(params, inputs, &data.starts);
                let hc = head.forward_batch(params, lc.hidden.clone());
                (hc.output().clone(), BodyCache::Lstm(lc, hc))
            }
        };
        Ok(PolicyForward {
            means,
            log_std: self.log_std(params).to_vec(),
            cache,
        })
    }

    /// Rows `(o_t, a_{t-1})` with a zero previous action at each episode start.
    fn recurrent_inputs(&self, data: &SequenceData<T>) -> Matrix<T> {
        let (m, od, ad) = (data.len(), self.obs_dim, self.action_dim);
        let mut x = Matrix::zeros(m, od + ad);
        let mut next_start = 0;
        for t in 0..m {
            let row = x.row_mut(t);
            row[..od].copy_from_slice(data.observations.row(t));
            while next_start < data.starts.len() && data.starts[next_start] <= t {
                next_start += 1;
            }
            let episode_start = data.starts[next_start - 1];
            if t > episode_start {
                row[od..].copy_from_slice(data.actions.row(t - 1));
            }
        }
        x
    }

    /// Gradient of `sum_t d_means[t] . mean_t + d_log_std . log_std` with respect to the parameters.
    pub fn backward(&self, params: &[T], fwd: &PolicyForward<T>, d_means: Matrix<T>, d_log_std: &[T]) -> Vec<T> {
        let mut grad = vec![T::zero(); params.len()];
        match (&self.body, &fwd.cache) {
            (Body::Mlp(net), BodyCache::Mlp(c)) => {
                net.backward_batch(params, c, d_means, &mut grad, false);
            }
            (Body::Lstm { cell, head }, BodyCache::Lstm(lc, hc)) => {
                let dh = head
                    .backward_batch(params, hc, d_means, &mut grad, true)
                    .expect("input gradient requested");
                cell.backward_batch(params, lc, &dh, &mut grad);
            }
            _ => unreachable!("cache built by this policy"),
        }
        for (g, &d) in grad[self.log_std_range()].iter_mut().zip(d_log_std) {
            *g += d;
        }
        grad
    }

    /// Tangent of the means along parameter direction `v`.
    pub fn jvp_means(&self, params: &[T], fwd: &PolicyForward<T>, v: &[T]) -> Matrix<T> {
        match (&self.body, &fwd.cache) {
            (Body::Mlp(net), BodyCache::Mlp(c)) => net.jvp_batch(params, c, v, None),
            (Body::Lstm { cell, head }, BodyCache::Lstm(lc, hc)) => {
                let dh = cell.jvp_batch(params, lc, v);
                head.jvp_batch(params, hc, v, Some(&dh))
            }
            _ => unreachable!("cache built by this policy"),
        }
    }

    /// `sum_t w_t log pi(a_t | history_t)` and its gradient at `params`.
    pub fn weighted_log_prob_grad(&self, params: &[T], data: &SequenceData<T>, weights: &[T]) -> Result<(T, Vec<T>)> {
        check_dim("log-prob weights", data.len(), weights.len())?;
        let fwd = self.forward(params, data)?;
        let (value, d_means, d_ls) = weighted_log_prob_terms(&fwd, &data.actions, weights);
        Ok((value, self.backward(params, &fwd, d_means, &d_ls)))
    }

    /// Average closed-form KL from the policy at `old` to the policy at `new` over the batch.
    pub fn mean_kl(&self, old: &[T], new: &[T], data: &SequenceData<T>) -> Result<T> {
        let a = self.forward(old, data)?;
        let b = self.forward(new, data)?;
        Ok(mean_kl_between(&a, &b))
    }

    /// Fisher-vector product from a cached pass at `params`, plus `damping * v`.
    ///
    /// Uses the Gauss-Newton form of the mean-KL Hessian at coincident
    /// parameters: `(1/M) J^T diag(1/sigma^2) J v` on the mean, and `2 v` on
    /// the log standard deviation.
    pub fn fisher_vector_product(&self, params: &[T], fwd: &PolicyForward<T>, v: &[T], damping: T) -> Result<Vec<T>> {
        check_dim("fisher-vector product direction", params.len(), v.len())?;
        let m = fwd.means.rows();
        let inv_m = T::one() / T::lit(m as f64);
        let mut tangent = self.jvp_means(params, fwd, v);
        let precision: Vec<T> = fwd
            .log_std
            .iter()
            .map(|&ls| (T::lit(-2.0) * ls).exp() * inv_m)
            .collect();
        for r in 0..m {
            for (t, &p) in tangent.row_mut(r).iter_mut().zip(&precision) {
                *t *= p;
            }
        }
        let mut out = self.backward(params, fwd, tangent, &vec![T::zero(); self.action_dim]);
        let ls = self.log_std_range();
        for i in ls {
            out[i] += T::lit(2.0) * v[i];
        }
        for (o, &vi) in out.iter_mut().zip(v) {
            *o += damping * vi;
        }
        Ok(out)
    }

    /// Single-observation log density for a feed-forward policy.
    pub fn log_prob(&self, params: &[T], obs: &[T], action: &[T]) -> Result<T> {
        check_dim("observation width", self.obs_dim, obs.len())?;
        if !all_finite(obs) {
            return Err(Error::NonFinite("observation"));
        }
        let mut mem = self.start_memory();
        let mean = self.mean_step(params, &mut mem, obs);
        gaussian::log_prob(&mean, self.log_std(params), action)
    }

    /// Log densities along each sequence, conditioning on the full history.
    pub fn recurrent_unroll(&self, params: &[T], data: &SequenceData<T>) -> Result<Vec<T>> {
        let fwd = self.forward(params, data)?;
        Ok(fwd.log_probs(&data.actions))
    }
}

/// Value, mean gradient and log-std gradient of `sum_t w_t log pi(a_t)`.
pub(crate) fn weighted_log_prob_terms<T: Scalar>(
    fwd: &PolicyForward<T>,
    actions: &Matrix<T>,
    weights: &[T],
) -> (T, Matrix<T>, Vec<T>) {
    let ad = actions.cols();
    let inv_var: Vec<T> = fwd.log_std.iter().map(|&ls| (T::lit(-2.0) * ls).exp()).collect();
    let mut d_means = Matrix::zeros(actions.rows(), ad);
    let mut d_ls = vec![T::zero(); ad];
    let mut value = T::zero();
    for (r, &w) in weights.iter().enumerate() {
        let mean = fwd.means.row(r);
        let a = actions.row(r);
        value += w * gaussian::log_prob_unchecked(mean, &fwd.log_std, a);
        let dm = d_means.row_mut(r);
        for d in 0..ad {
            let diff = a[d] - mean[d];
            dm[d] = w * diff * inv_var[d];
            d_ls[d] += w * (diff * diff * inv_var[d] - T::one());
        }
    }
    (value, d_means, d_ls)
}

pub(crate) fn mean_kl_between<T: Scalar>(old: &PolicyForward<T>, new: &PolicyForward<T>) -> T {
    let m = old.means.rows();
    let mut total = T::zero();
    for r in 0..m {
        total += gaussian::kl(old.means.row(r), &old.log_std, new.means.row(r), &new.log_std);
    }
    total / T::lit(m as f64)
}

impl<T: Scalar> Actor<T> for GaussianPolicy<T> {
    type Memory = PolicyMemory<T>;

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn start(&self) -> PolicyMemory<T> {
        self.start_memory()
    }

    fn act(&self, memory: &mut PolicyMemory<T>, obs: &[T], rng: &mut SeededRng) -> Vec<T> {
        let mean = self.mean_step(&self.params, memory, obs);
        let a = gaussian::sample(&mean, self.log_std(&self.params), rng);
        memory.prev_action.copy_from_slice(&a);
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(arch: PolicyArch, seed: u64) -> GaussianPolicy<f64> {
        let mut p = GaussianPolicy::new(arch, 2, 2, &mut SeededRng::new(seed, 0)).unwrap();
        let mut rng = SeededRng::new(seed + 100, 0);
        let q: Vec<f64> = p.params().iter().map(|v| v + 0.2 * rng.normal::<f64>()).collect();
        p.set_params(&q).unwrap();
        p
    }

    fn tiny_mlp() -> PolicyArch {
        PolicyArch::Mlp {
            hidden: vec![(3, Activation::Tanh)],
        }
    }

    fn data(m: usize, starts: Vec<usize>, seed: u64) -> SequenceData<f64> {
        let mut rng = SeededRng::new(seed, 7);
        let o = Matrix::from_vec(m, 2, (0..2 * m).map(|_| rng.normal()).collect());
        let a = Matrix::from_vec(m, 2, (0..2 * m).map(|_| rng.normal()).collect());
        SequenceData::new(o, a, starts).unwrap()
    }

    #[test]
    fn default_architecture_sizes() {
        let p = GaussianPolicy::<f64>::new(PolicyArch::default_mlp(), 4, 1, &mut SeededRng::new(0, 0)).unwrap();
        let expected = 4 * 100 + 100 + 100 * 50 + 50 + 50 * 25 + 25 + 25 + 1 + 1;
        assert_eq!(p.num_params(), expected);
        assert!(p.log_std(p.params()).iter().all(|&v| v == 0.0));
        let r = GaussianPolicy::<f64>::new(PolicyArch::default_lstm(), 4, 1, &mut SeededRng::new(0, 0)).unwrap();
        assert!(r.is_recurrent());
        assert_eq!(r.start_memory().recurrent.unwrap().h.len(), 32);
    }

    #[test]
    fn descriptor_round_trip() {
        for arch in [PolicyArch::default_mlp(), PolicyArch::default_lstm(), tiny_mlp()] {
            let p = GaussianPolicy::<f64>::zeroed(arch.clone(), 3, 2).unwrap();
            let q = GaussianPolicy::<f64>::from_descriptor(&p.descriptor()).unwrap();
            assert_eq!(q.arch(), &arch);
            assert_eq!(q.num_params(), p.num_params());
        }
        assert!(GaussianPolicy::<f64>::from_descriptor("gaussian obs=2").is_err());
    }

    #[test]
    fn weighted_log_prob_gradient_matches_fd() {
        for arch in [tiny_mlp(), PolicyArch::Lstm { hidden: 2 }] {
            let p = tiny(arch, 1);
            let d = data(6, vec![0, 2], 1);
            let w = [0.5, -1.0, 2.0, 0.1, 0.0, 1.3];
            let (_, g) = p.weighted_log_prob_grad(p.params(), &d, &w).unwrap();
            let f = |q: &[f64]| p.weighted_log_prob_grad(q, &d, &w).unwrap().0;
            let h = 1e-6;
            for i in 0..g.len() {
                let mut a = p.params().to_vec();
                let mut b = a.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (f(&a) - f(&b)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{i}: {fd} {}", g[i]);
            }
        }
    }

    #[test]
    fn recurrent_base_case_is_feed_forward_on_zero_action() {
        let p = tiny(PolicyArch::Lstm { hidden: 3 }, 2);
        let d = data(1, vec![0], 3);
        let lp = p.recurrent_unroll(p.params(), &d).unwrap();
        let mut mem = p.start_memory();
        let mean = p.mean_step(p.params(), &mut mem, d.observations.row(0));
        let direct = gaussian::log_prob(&mean, p.log_std(p.params()), d.actions.row(0)).unwrap();
        assert!((lp[0] - direct).abs() < 1e-14);
    }

    #[test]
    fn rollout_stepping_matches_batch() {
        let p = tiny(PolicyArch::Lstm { hidden: 3 }, 4);
        let d = data(5, vec![0, 3], 5);
        let fwd = p.forward(p.params(), &d).unwrap();
        for (s, e) in [(0, 3), (3, 5)] {
            let mut mem = p.start_memory();
            for t in s..e {
                let m = p.mean_step(p.params(), &mut mem, d.observations.row(t));
                for k in 0..2 {
                    assert!((m[k] - fwd.means[(t, k)]).abs() < 1e-14);
                }
                mem.prev_action.copy_from_slice(d.actions.row(t));
            }
        }
    }

    #[test]
    fn kl_examples() {
        let p = tiny(tiny_mlp(), 5);
        let d = data(4, vec![0], 6);
        assert_eq!(p.mean_kl(p.params(), p.params(), &d).unwrap(), 0.0);
        let mut q = p.params().to_vec();
        for i in p.log_std_range() {
            q[i] = p.params()[i] + 2.0f64.ln();
        }
        let kl = p.mean_kl(p.params(), &q, &d).unwrap();
        assert!((kl - 2.0 * (2.0f64.ln() - 3.0 / 8.0)).abs() < 1e-12);
        let empty = SequenceData::new(Matrix::zeros(0, 2), Matrix::zeros(0, 2), vec![]).unwrap();
        assert!(p.mean_kl(p.params(), p.params(), &empty).is_err());
    }

    #[test]
    fn fvp_linear_and_zero() {
        let p = tiny(tiny_mlp(), 6);
        let d = data(5, vec![0], 7);
        let fwd = p.forward(p.params(), &d).unwrap();
        let n = p.num_params();
        let zero = p.fisher_vector_product(p.params(), &fwd, &vec![0.0; n], 1e-5).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let mut rng = SeededRng::new(0, 0);
        let u: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let uv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let fu = p.fisher_vector_product(p.params(), &fwd, &u, 1e-5).unwrap();
        let fv = p.fisher_vector_product(p.params(), &fwd, &v, 1e-5).unwrap();
        let fuv = p.fisher_vector_product(p.params(), &fwd, &uv, 1e-5).unwrap();
        for i in 0..n {
            assert!((fuv[i] - fu[i] - fv[i]).abs() < 1e-8);
        }
        assert!(p.fisher_vector_product(p.params(), &fwd, &u[..n - 1], 1e-5).is_err());
    }
}
