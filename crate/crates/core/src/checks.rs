//! Acceptance self-tests, shared by the `check` command and the acceptance test target.
//!
//! Every check returns a [`CheckOutcome`]; tolerances are fixed here.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::algos::ddpg::MiniBatch;
use crate::algos::reps::reps_dual;
use crate::algos::rwr::rwr_objective;
use crate::algos::{
    reinforce_gradient, BatchSample, Cem, CemConfig, CmaEs, CmaEsConfig, Ddpg, DdpgConfig, RepsData, Transition,
};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::grid::{grid_score, select_best};
use crate::harness::metrics::MetricsRow;
use crate::harness::run::{metrics_path, run_experiment, seed_dir};
use crate::harness::stats::welch_t_test;
use crate::linalg::{conjugate_gradient, dot, norm, Matrix};
use crate::mdp::{rollout, Actor, Env, Trajectory};
use crate::nn::{Activation, GaussianPolicy, PolicyArch, SequenceData};
use crate::rng::SeededRng;
use crate::tasks::{PhysicsParams, TaskKind};
use crate::wrappers::{NoiseDelaySpec, NoisyDelayed, SysId, SysIdSpec};

/// Relative finite-difference error allowed for analytic gradients.
pub const GRAD_REL_TOL: f64 = 1e-4;
pub const FVP_TOL: f64 = 1e-6;
pub const CG_REL_RESIDUAL: f64 = 1e-8;
pub const TNPG_KL_FACTOR: f64 = 1.5;
pub const TNPG_KL_FRACTION: f64 = 0.95;
pub const TRPO_TNPG_RETURN: f64 = 4000.0;
pub const REINFORCE_RETURN: f64 = 3000.0;
pub const CEM_TOL: f64 = 1e-2;
pub const CMAES_TOL: f64 = 1e-3;
pub const CRITIC_REL_TOL: f64 = 0.05;
pub const WELCH_TOL: f64 = 1e-9;
pub const TOTAL_LIMIT_SECONDS: f64 = 3600.0;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub limit_seconds: Option<f64>,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

/// Where checks that run experiments write, and how many threads they may use.
#[derive(Clone, Debug)]
pub struct CheckContext {
    pub scratch: PathBuf,
    pub jobs: usize,
}

type CheckFn = fn(&CheckContext) -> Result<(bool, String)>;

/// `(id, name, runtime limit in seconds, check)`.
pub const CHECKS: [(usize, &str, Option<f64>, CheckFn); 10] = [
    (1, "gradient oracles", Some(60.0), gradient_oracles),
    (2, "Fisher-vector product oracle", Some(60.0), fvp_oracle),
    (3, "conjugate gradient", Some(10.0), conjugate_gradient_check),
    (4, "trust-region contract", Some(600.0), trust_region_contract),
    (5, "desk-scale learning", Some(1800.0), desk_scale_learning),
    (6, "algorithm ordering", Some(1800.0), algorithm_ordering),
    (7, "gradient-free optimizers", Some(10.0), gradient_free),
    (8, "DDPG critic oracle", Some(300.0), critic_oracle),
    (9, "wrapper oracles", None, wrapper_oracles),
    (10, "protocol reproducibility", None, protocol_reproducibility),
];

pub fn run_check(id: usize, ctx: &CheckContext) -> Result<CheckOutcome> {
    let (id, name, limit, f) = *CHECKS
        .iter()
        .find(|c| c.0 == id)
        .ok_or_else(|| Error::Config(format!("no criterion {id}; valid: 1-11")))?;
    let t0 = Instant::now();
    let (mut passed, mut detail) = match f(ctx) {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let seconds = t0.elapsed().as_secs_f64();
    if let Some(l) = limit.filter(|&l| seconds > l) {
        passed = false;
        detail.push_str(&format!("; runtime {seconds:.0}s exceeds {l:.0}s"));
    }
    Ok(CheckOutcome {
        id,
        name,
        passed,
        detail,
        seconds,
        limit_seconds: limit,
    })
}

/// Runs criteria 1-10 in order, then criterion 11: all of them passing within an hour.
pub fn run_all(ctx: &CheckContext, mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for (id, ..) in CHECKS {
        let o = run_check(id, ctx).expect("listed criterion");
        report(&o);
        out.push(o);
    }
    let total: f64 = out.iter().map(|o| o.seconds).sum();
    let failed: Vec<String> = out.iter().filter(|o| !o.passed).map(|o| o.id.to_string()).collect();
    let passed = failed.is_empty() && total <= TOTAL_LIMIT_SECONDS;
    let detail = if failed.is_empty() {
        format!("criteria 1-10 pass in {total:.0}s (limit {TOTAL_LIMIT_SECONDS:.0}s)")
    } else {
        format!("failing criteria: {}; total {total:.0}s", failed.join(", "))
    };
    let o = CheckOutcome {
        id: 11,
        name: "invariant suite end to end",
        passed,
        detail,
        seconds: total,
        limit_seconds: Some(TOTAL_LIMIT_SECONDS),
    };
    report(&o);
    out.push(o);
    out
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central finite-difference gradient with step `h`.
pub fn fd_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn random_trajectory(rng: &mut SeededRng, len: usize, obs_dim: usize, act_dim: usize) -> Trajectory<f64> {
    let mut v = |n: usize| (0..n).map(|_| rng.normal::<f64>()).collect::<Vec<f64>>();
    Trajectory {
        observations: (0..len).map(|_| v(obs_dim)).collect(),
        actions: (0..len).map(|_| v(act_dim)).collect(),
        rewards: v(len),
        final_observation: v(obs_dim),
        terminated: false,
    }
}

fn small_policy(arch: PolicyArch, obs_dim: usize, act_dim: usize, rng: &mut SeededRng) -> Result<GaussianPolicy<f64>> {
    let mut pi = GaussianPolicy::new(arch, obs_dim, act_dim, rng)?;
    let mut p = pi.params().to_vec();
    for (k, i) in pi.log_std_range().enumerate() {
        p[i] = -0.3 + 0.2 * k as f64;
    }
    pi.set_params(&p)?;
    Ok(pi)
}

fn tanh_mlp(units: usize) -> PolicyArch {
    PolicyArch::Mlp {
        hidden: vec![(units, Activation::Tanh)],
    }
}

fn value_or_nan(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// Criterion 1.
pub fn gradient_oracles(_: &CheckContext) -> Result<(bool, String)> {
    let h = 1e-5;
    let mut rng = SeededRng::new(101, 0);
    let mut errors: Vec<(&str, usize, f64)> = Vec::new();

    let pi = small_policy(tanh_mlp(3), 2, 1, &mut rng)?;
    let trajs = vec![
        random_trajectory(&mut rng, 3, 2, 1),
        random_trajectory(&mut rng, 2, 2, 1),
    ];
    let data = SequenceData::from_trajectories(&trajs)?;
    let ones = vec![1.0; data.len()];
    let theta = pi.params().to_vec();

    let (_, g) = pi.weighted_log_prob_grad(&theta, &data, &ones)?;
    let fd = fd_gradient(&theta, h, |p| {
        value_or_nan(pi.forward(p, &data).map(|f| f.log_probs(&data.actions).iter().sum()))
    });
    errors.push(("log-prob", theta.len(), relative_error(&g, &fd)));

    let batch = BatchSample::new(&trajs, 0.9, None)?;
    let g = reinforce_gradient(&pi, &theta, &batch)?;
    let m = batch.len() as f64;
    let fd = fd_gradient(&theta, h, |p| {
        value_or_nan(pi.forward(p, &batch.data).map(|f| {
            let lp = f.log_probs(&batch.data.actions);
            dot(&lp, &batch.advantages) / m
        }))
    });
    errors.push(("REINFORCE surrogate", theta.len(), relative_error(&g, &fd)));

    let weights: Vec<f64> = (0..data.len()).map(|_| rng.uniform() * 2.0).collect();
    let (_, g) = rwr_objective(&pi, &theta, &data, &weights)?;
    let fd = fd_gradient(&theta, h, |p| {
        value_or_nan(rwr_objective(&pi, p, &data, &weights).map(|r| r.0))
    });
    errors.push(("RWR objective", theta.len(), relative_error(&g, &fd)));

    let reps = RepsData::from_batch(&batch)?;
    let x: Vec<f64> = std::iter::once(1.3)
        .chain((0..5).map(|_| 0.3 * rng.normal::<f64>()))
        .collect();
    let dual = reps_dual(x[0], &x[1..], &reps, 0.1)?;
    let g: Vec<f64> = std::iter::once(dual.d_eta).chain(dual.d_nu).collect();
    let fd = fd_gradient(&x, h, |p| {
        value_or_nan(reps_dual(p[0], &p[1..], &reps, 0.1).map(|d| d.value))
    });
    errors.push(("REPS dual", x.len(), relative_error(&g, &fd)));

    let cfg = DdpgConfig {
        actor_hidden: vec![4],
        critic_hidden: vec![5],
        ..DdpgConfig::default()
    };
    let ddpg = Ddpg::new(2, &[-1.0], &[2.0], 0.9, cfg, &mut rng)?;
    let items: Vec<Transition<f64>> = (0..6)
        .map(|i| Transition {
            observation: vec![rng.normal(), rng.normal()],
            action: vec![rng.uniform_in(-1.0, 2.0)],
            reward: rng.normal(),
            next_observation: vec![rng.normal(), rng.normal()],
            terminal: i == 5,
        })
        .collect();
    let mb = MiniBatch::from_transitions(&items.iter().collect::<Vec<_>>())?;
    let targets = ddpg.critic_targets(&mb);
    let phi = ddpg.critic.params.clone();
    let (_, g) = ddpg.critic_loss_grad(&phi, &mb, &targets)?;
    let fd = fd_gradient(&phi, h, |p| {
        value_or_nan(ddpg.critic_loss_grad(p, &mb, &targets).map(|r| r.0))
    });
    errors.push(("DDPG critic", phi.len(), relative_error(&g, &fd)));
    let mu = ddpg.actor.params.clone();
    let (_, g) = ddpg.actor_objective_grad(&mu, &mb);
    let fd = fd_gradient(&mu, h, |p| ddpg.actor_objective_grad(p, &mb).0);
    errors.push(("DDPG actor", mu.len(), relative_error(&g, &fd)));

    let lstm = small_policy(PolicyArch::Lstm { hidden: 2 }, 1, 1, &mut rng)?;
    let seqs = vec![
        random_trajectory(&mut rng, 4, 1, 1),
        random_trajectory(&mut rng, 3, 1, 1),
    ];
    let sdata = SequenceData::from_trajectories(&seqs)?;
    let theta = lstm.params().to_vec();
    let (_, g) = lstm.weighted_log_prob_grad(&theta, &sdata, &vec![1.0; sdata.len()])?;
    let fd = fd_gradient(&theta, h, |p| {
        value_or_nan(lstm.recurrent_unroll(p, &sdata).map(|v| v.iter().sum()))
    });
    errors.push(("recurrent unroll", theta.len(), relative_error(&g, &fd)));

    let passed = errors.iter().all(|&(_, n, e)| e < GRAD_REL_TOL && n <= 50);
    let worst = errors.iter().map(|e| e.2).fold(0.0, f64::max);
    let detail = errors
        .iter()
        .map(|(name, n, e)| format!("{name} ({n} params) {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((
        passed,
        format!("max relative error {worst:.1e} < {GRAD_REL_TOL:.0e} [{detail}]"),
    ))
}

/// Three-point Gauss-Hermite rule for a standard normal: nodes and weights.
const GH3: [(f64, f64); 3] = [
    (-1.732_050_807_568_877_2, 1.0 / 6.0),
    (0.0, 2.0 / 3.0),
    (1.732_050_807_568_877_2, 1.0 / 6.0),
];

/// Fisher matrix of a two-action policy averaged over `obs`, with the inner
/// expectation over actions computed by exact quadrature of score outer products.
pub fn materialized_fisher(pi: &GaussianPolicy<f64>, theta: &[f64], obs: &[Vec<f64>]) -> Result<Matrix<f64>> {
    let n = theta.len();
    let ad = pi.action_dim();
    if ad != 2 {
        return Err(Error::Config("materialized Fisher oracle expects two actions".into()));
    }
    let mut fim = Matrix::zeros(n, n);
    let std: Vec<f64> = pi.log_std(theta).iter().map(|l| l.exp()).collect();
    for o in obs {
        let probe = SequenceData::from_rows(Matrix::from_rows(&[o.as_slice()], o.len()), Matrix::zeros(1, ad))?;
        let mean = pi.forward(theta, &probe)?.means.row(0).to_vec();
        for &(z0, w0) in &GH3 {
            for &(z1, w1) in &GH3 {
                let a = [mean[0] + std[0] * z0, mean[1] + std[1] * z1];
                let d = SequenceData::from_rows(
                    Matrix::from_rows(&[o.as_slice()], o.len()),
                    Matrix::from_rows(&[&a[..]], 2),
                )?;
                let (_, g) = pi.weighted_log_prob_grad(theta, &d, &[1.0])?;
                let w = w0 * w1 / obs.len() as f64;
                for i in 0..n {
                    let row = fim.row_mut(i);
                    for j in 0..n {
                        row[j] += w * g[i] * g[j];
                    }
                }
            }
        }
    }
    Ok(fim)
}

/// Criterion 2.
pub fn fvp_oracle(_: &CheckContext) -> Result<(bool, String)> {
    let mut rng = SeededRng::new(202, 0);
    let pi = small_policy(tanh_mlp(3), 2, 2, &mut rng)?;
    let theta = pi.params().to_vec();
    let obs: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.normal(), rng.normal()]).collect();
    let data = SequenceData::from_rows(Matrix::from_rows(&obs, 2), Matrix::zeros(obs.len(), 2))?;
    let fwd = pi.forward(&theta, &data)?;
    let fim = materialized_fisher(&pi, &theta, &obs)?;
    let n = theta.len();
    let (mut max_err, mut max_asym, mut min_quad) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut vs: Vec<Vec<f64>> = Vec::new();
    for _ in 0..100 {
        let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let fv = pi.fisher_vector_product(&theta, &fwd, &v, 0.0)?;
        let oracle = fim.mat_vec(&v);
        for (a, b) in fv.iter().zip(&oracle) {
            max_err = max_err.max((a - b).abs() / b.abs().max(1.0));
        }
        min_quad = min_quad.min(dot(&v, &fv));
        if let Some(u) = vs.last() {
            let fu = pi.fisher_vector_product(&theta, &fwd, u, 0.0)?;
            let asym = (dot(u, &fv) - dot(&v, &fu)).abs() / (1.0 + dot(u, &fv).abs());
            max_asym = max_asym.max(asym);
        }
        vs.push(v);
    }
    let passed = max_err < FVP_TOL && max_asym < FVP_TOL && min_quad >= -FVP_TOL;
    Ok((
        passed,
        format!(
            "{n} params, 100 vectors: max |Fv - F_oracle v| {max_err:.1e} (< {FVP_TOL:.0e}), \
             max asymmetry {max_asym:.1e}, min v.Fv {min_quad:.3e}"
        ),
    ))
}

/// Criterion 3.
pub fn conjugate_gradient_check(_: &CheckContext) -> Result<(bool, String)> {
    let mut rng = SeededRng::new(303, 0);
    let n = 50;
    let mut worst = 0.0f64;
    let mut max_iters = 0;
    for _ in 0..20 {
        let b_mat = Matrix::from_vec(n, n, (0..n * n).map(|_| rng.normal()).collect());
        let mut a = b_mat.transpose().matmul(&b_mat);
        for i in 0..n {
            a.row_mut(i)[i] += 1.0;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let sol = conjugate_gradient(|v| a.mat_vec(v), &b, 10 * n, 1e-12)?;
        let ax = a.mat_vec(&sol.x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(x, y)| x - y).collect();
        worst = worst.max(norm(&r) / norm(&b));
        max_iters = max_iters.max(sol.iterations);
    }
    let b: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let id = conjugate_gradient(|v| v.to_vec(), &b, 10, 1e-12)?;
    let exact = id.x == b;
    let passed = worst < CG_REL_RESIDUAL && id.iterations == 1 && exact;
    Ok((
        passed,
        format!(
            "20 random 50x50 SPD systems: max relative residual {worst:.1e} (< {CG_REL_RESIDUAL:.0e}), \
             up to {max_iters} iterations; identity solved in {} iteration(s), exact = {exact}",
            id.iterations
        ),
    ))
}

fn experiment_rows(ctx: &CheckContext, sub: &str, config: &str) -> Result<Vec<Vec<MetricsRow>>> {
    let exp = ExperimentConfig::parse(config)?.resolve()?;
    let out = ctx.scratch.join(sub);
    let runs = run_experiment(&exp, &out, ctx.jobs);
    runs.into_iter().map(|r| r.rows).collect()
}

fn desk_config(task: &str, algo: &str, iterations: usize, seeds: &[u64], extra: &str) -> String {
    let seeds: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
    format!(
        "[task]\nid = \"{task}\"\n[algorithm]\nid = \"{algo}\"\n{extra}\n[protocol]\nsim_steps_per_iter = 10000\n\
         num_iterations = {iterations}\nhorizon = 500\ndiscount = 0.99\nseeds = [{}]\ncheckpoint_every = 1000\n",
        seeds.join(", ")
    )
}

/// Mean of `mean_return` over the last `k` rows of every seed.
pub fn final_mean(runs: &[Vec<MetricsRow>], k: usize) -> f64 {
    let tail: Vec<f64> = runs
        .iter()
        .flat_map(|rows| rows[rows.len().saturating_sub(k)..].iter().map(|r| r.mean_return))
        .collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Criterion 4.
pub fn trust_region_contract(ctx: &CheckContext) -> Result<(bool, String)> {
    let delta = 0.05;
    let extra = format!("delta_kl = {delta}");
    let trpo = experiment_rows(ctx, "c4", &desk_config("cartpole_balance", "trpo", 50, &[0], &extra))?;
    let tnpg = experiment_rows(ctx, "c4", &desk_config("cartpole_balance", "tnpg", 50, &[0], &extra))?;
    let trpo_kl: Vec<f64> = trpo[0].iter().filter_map(|r| r.mean_kl).collect();
    let tnpg_kl: Vec<f64> = tnpg[0].iter().filter_map(|r| r.mean_kl).collect();
    let trpo_max = trpo_kl.iter().copied().fold(0.0, f64::max);
    let within = tnpg_kl.iter().filter(|&&k| k < TNPG_KL_FACTOR * delta).count();
    let frac = within as f64 / tnpg_kl.len().max(1) as f64;
    let passed = trpo_kl.len() == 50 && tnpg_kl.len() == 50 && trpo_max <= delta && frac >= TNPG_KL_FRACTION;
    Ok((
        passed,
        format!(
            "TRPO max KL {trpo_max:.4} <= {delta}; TNPG KL < {:.3} in {within}/{} iterations ({:.0}% >= {:.0}%)",
            TNPG_KL_FACTOR * delta,
            tnpg_kl.len(),
            100.0 * frac,
            100.0 * TNPG_KL_FRACTION
        ),
    ))
}

/// Criterion 5.
pub fn desk_scale_learning(ctx: &CheckContext) -> Result<(bool, String)> {
    let mut passed = true;
    let mut parts = Vec::new();
    for (algo, extra, threshold) in [
        ("trpo", "delta_kl = 0.05", TRPO_TNPG_RETURN),
        ("tnpg", "delta_kl = 0.05", TRPO_TNPG_RETURN),
        ("reinforce", "", REINFORCE_RETURN),
    ] {
        let runs = experiment_rows(
            ctx,
            "c5",
            &desk_config("cartpole_balance", algo, 100, &[0, 1, 2], extra),
        )?;
        let m = final_mean(&runs, 10);
        let per_seed: Vec<String> = runs
            .iter()
            .map(|r| format!("{:.0}", final_mean(std::slice::from_ref(r), 10)))
            .collect();
        passed &= m >= threshold;
        parts.push(format!("{algo} {m:.1} >= {threshold} (seeds {})", per_seed.join("/")));
    }
    Ok((passed, parts.join("; ")))
}

/// Criterion 6.
pub fn algorithm_ordering(ctx: &CheckContext) -> Result<(bool, String)> {
    let mut means = Vec::new();
    for algo in ["trpo", "tnpg", "reps"] {
        let runs = experiment_rows(ctx, "c6", &desk_config("cartpole_swingup", algo, 100, &[0, 1, 2], ""))?;
        means.push((algo, final_mean(&runs, 10)));
    }
    let reps = means[2].1;
    let passed = means[0].1 > reps && means[1].1 > reps;
    let text: Vec<String> = means.iter().map(|(a, m)| format!("{a} {m:.1}")).collect();
    Ok((
        passed,
        format!("final-10 means on swing-up: {} (TRPO, TNPG > REPS)", text.join(", ")),
    ))
}

/// Criterion 7.
pub fn gradient_free(_: &CheckContext) -> Result<(bool, String)> {
    let target = [0.5, -1.0, 1.5, 0.0, -0.5];
    let quad = |x: &[f64]| -x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let cfg = CemConfig {
        population: 100,
        elite_fraction: 0.2,
        init_std: 1.0,
        extra_noise: 0.0,
        extra_noise_iters: 50,
    };
    let mut cem = Cem::new(vec![0.0; 5], cfg)?;
    let mut rng = SeededRng::new(707, 0);
    for _ in 0..50 {
        cem.iterate(quad, &mut rng)?;
    }
    let cem_err = cem
        .mean
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();

    let sphere = |x: &[f64]| -x.iter().map(|v| v * v).sum::<f64>();
    let cfg = CmaEsConfig {
        sigma0: 0.5,
        ..CmaEsConfig::default()
    };
    let mut es = CmaEs::new(&[3.0, 3.0], &cfg)?;
    let mut rng = SeededRng::new(708, 0);
    while es.evaluations + es.population() <= 300 {
        es.iterate(sphere, &mut rng)?;
    }
    let (sphere_err, sphere_evals) = (es.mean.norm(), es.evaluations);

    let rosen = |x: &[f64]| -(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2));
    let mut es = CmaEs::new(&[-1.0, 1.0], &cfg)?;
    let mut rng = SeededRng::new(709, 0);
    while es.evaluations + es.population() <= 5000 {
        es.iterate(rosen, &mut rng)?;
    }
    let rosen_val = -rosen(&[es.mean[0], es.mean[1]]);
    let passed = cem_err < CEM_TOL && sphere_err < CMAES_TOL && rosen_val < CMAES_TOL;
    Ok((
        passed,
        format!(
            "CEM |mu - x*| {cem_err:.1e} after 50 iterations; CMA-ES sphere |m| {sphere_err:.1e} after {sphere_evals} \
             evaluations; Rosenbrock f(m) {rosen_val:.1e} after {} evaluations",
            es.evaluations
        ),
    ))
}

/// Deterministic 3-state cycle `0 -> 1 -> 2 -> 0` with rewards `[1, 0, 2]`.
pub const CYCLE_REWARDS: [f64; 3] = [1.0, 0.0, 2.0];

/// Value iteration on the cycle until the update is below `1e-12`.
pub fn cycle_values(discount: f64) -> [f64; 3] {
    let mut v = [0.0; 3];
    loop {
        let next: [f64; 3] = std::array::from_fn(|s| CYCLE_REWARDS[s] + discount * v[(s + 1) % 3]);
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-12 {
            return v;
        }
    }
}

/// Criterion 8.
pub fn critic_oracle(_: &CheckContext) -> Result<(bool, String)> {
    let discount = 0.9;
    let truth = cycle_values(discount);
    let cfg = DdpgConfig {
        batch_size: 32,
        replay_capacity: 300,
        critic_weight_decay: 0.0,
        tau: 0.01,
        reward_scale: 1.0,
        actor_hidden: vec![8],
        critic_hidden: vec![32, 32],
        ..DdpgConfig::default()
    };
    let mut rng = SeededRng::new(808, 0);
    let mut ddpg = Ddpg::new(3, &[-1.0], &[1.0], discount, cfg, &mut rng)?;
    let one_hot = |s: usize| (0..3).map(|i| if i == s { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    for k in 0..300 {
        let s = k % 3;
        let obs = one_hot(s);
        let action = ddpg.actor.act_with(&ddpg.actor.params, &obs);
        ddpg.pool.push(Transition {
            observation: obs,
            action,
            reward: CYCLE_REWARDS[s],
            next_observation: one_hot((s + 1) % 3),
            terminal: false,
        });
    }
    for _ in 0..20_000 {
        let mb = ddpg.pool.sample(ddpg.config.batch_size, &mut rng)?;
        ddpg.critic_update(&mb)?;
        ddpg.soft_update_targets()?;
    }
    let learned: Vec<f64> = (0..3)
        .map(|s| {
            let o = one_hot(s);
            ddpg.critic
                .value(&ddpg.critic.params, &o, &ddpg.actor.act_with(&ddpg.actor.params, &o))
        })
        .collect();
    let worst = learned
        .iter()
        .zip(&truth)
        .map(|(q, v)| (q - v).abs() / v.abs())
        .fold(0.0, f64::max);
    Ok((
        worst < CRITIC_REL_TOL,
        format!(
            "Q(s, mu(s)) = [{:.3}, {:.3}, {:.3}] vs value iteration [{:.3}, {:.3}, {:.3}], max relative error {:.2}%",
            learned[0],
            learned[1],
            learned[2],
            truth[0],
            truth[1],
            truth[2],
            100.0 * worst
        ),
    ))
}

/// Plays back a fixed action list, cycling.
struct Playback(Vec<f64>);

impl Actor<f64> for Playback {
    type Memory = usize;

    fn action_dim(&self) -> usize {
        1
    }

    fn start(&self) -> usize {
        0
    }

    fn act(&self, t: &mut usize, _: &[f64], _: &mut SeededRng) -> Vec<f64> {
        let a = self.0[*t % self.0.len()];
        *t += 1;
        vec![a]
    }
}

fn base_env(kind: TaskKind) -> Result<Box<dyn Env<f64>>> {
    kind.build(PhysicsParams::for_task(kind))
}

/// Criterion 9.
pub fn wrapper_oracles(_: &CheckContext) -> Result<(bool, String)> {
    let mut rng = SeededRng::new(909, 0);
    let mut delay_ok = true;
    let mut identity_ok = true;
    let mut sysid_ok = true;
    let mut draws = 0usize;
    for kind in TaskKind::ALL {
        let scale = base_env(kind)?.action_bounds().1[0];
        let actions: Vec<f64> = (0..60).map(|_| rng.uniform_in(-scale, scale)).collect();

        let spec = NoiseDelaySpec {
            noise_sigma: 0.0,
            delay_frames: 3,
        };
        let mut delayed = NoisyDelayed::new(base_env(kind)?, spec)?;
        let mut base = base_env(kind)?;
        let mut shifted = vec![0.0; 3];
        shifted.extend_from_slice(&actions);
        let mut r1 = SeededRng::new(kind as u64, 1);
        let mut r2 = r1.clone();
        let mut o1 = delayed.reset(&mut r1);
        let mut o2 = base.reset(&mut r2);
        delay_ok &= o1 == o2;
        for t in 0..actions.len() {
            let s1 = delayed.step(&actions[t..=t])?;
            let s2 = base.step(&shifted[t..=t])?;
            delay_ok &= s1.observation == s2.observation && s1.reward == s2.reward && s1.terminated == s2.terminated;
            o1 = s1.observation;
            o2 = s2.observation;
            if s2.terminated {
                break;
            }
        }
        delay_ok &= o1 == o2;

        let zero = NoiseDelaySpec {
            noise_sigma: 0.0,
            delay_frames: 0,
        };
        let mut plain = NoisyDelayed::new(base_env(kind)?, zero)?;
        let actor = Playback(actions.clone());
        for seed in 0..3 {
            let a = rollout(&mut plain, &actor, 100, &mut SeededRng::new(seed, 7))?;
            let b = rollout(base.as_mut(), &actor, 100, &mut SeededRng::new(seed, 7))?;
            identity_ok &= a == b;
        }

        let spec = SysIdSpec::for_task(kind);
        let mut env = SysId::new(base_env(kind)?, spec.clone());
        let nominal = PhysicsParams::<f64>::for_task(kind);
        for _ in 0..10_000 {
            env.reset(&mut rng);
            draws += 1;
            for f in &spec.factors {
                let ratio = f.field.get(env.physics()) / f.field.get(&nominal);
                sysid_ok &= ratio >= f.low && ratio <= f.high;
            }
        }
    }
    Ok((
        delay_ok && identity_ok && sysid_ok,
        format!(
            "delay-3 equals shifted base on all tasks: {delay_ok}; sigma=0/delay=0 bit-identical: {identity_ok}; \
             {draws} SysId draws within ranges: {sysid_ok}"
        ),
    ))
}

/// Textbook Welch test with a continued-fraction incomplete beta; independent of [`welch_t_test`].
pub fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    fn moments(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let ss = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        (m, ss / (n - 1.0))
    }
    let (ma, va) = moments(a);
    let (mb, vb) = moments(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let t = (ma - mb) / (va / na + vb / nb).sqrt();
    let df = (va / na + vb / nb).powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let p = incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    (t, df, p)
}

#[allow(clippy::excessive_precision)]
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut s = C[0];
        for (i, &c) in C.iter().enumerate().skip(1) {
            s += c / (x + i as f64);
        }
        let t = x + G + 0.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
    }
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

fn files_identical(a: &Path, b: &Path) -> Result<bool> {
    Ok(std::fs::read(a)? == std::fs::read(b)?)
}

/// Criterion 10.
pub fn protocol_reproducibility(ctx: &CheckContext) -> Result<(bool, String)> {
    let config = "[task]\nid = \"cartpole_swingup\"\n[algorithm]\nid = \"trpo\"\npolicy = \"mlp(8:tanh)\"\n\
                  [protocol]\nsim_steps_per_iter = 1000\nnum_iterations = 3\nhorizon = 200\nseeds = [0, 1]\n";
    let exp = ExperimentConfig::parse(config)?.resolve()?;
    let (d1, d2) = (ctx.scratch.join("c10a"), ctx.scratch.join("c10b"));
    let mut identical = true;
    for d in [&d1, &d2] {
        for r in run_experiment(&exp, d, ctx.jobs) {
            r.rows?;
        }
    }
    for &s in &exp.protocol.seeds {
        identical &= files_identical(
            &metrics_path(&seed_dir(&d1, &exp, s)),
            &metrics_path(&seed_dir(&d2, &exp, s)),
        )?;
    }

    let mut rng = SeededRng::new(1010, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let na = 2 + rng.index(9);
        let nb = 2 + rng.index(9);
        let (sa, sb) = (0.1 + 5.0 * rng.uniform(), 0.1 + 5.0 * rng.uniform());
        let shift = 3.0 * rng.normal::<f64>();
        let a: Vec<f64> = (0..na).map(|_| sa * rng.normal::<f64>()).collect();
        let b: Vec<f64> = (0..nb).map(|_| shift + sb * rng.normal::<f64>()).collect();
        let r = welch_t_test(&a, &b)?;
        let (t, df, p) = welch_oracle(&a, &b);
        worst = worst
            .max((r.t - t).abs() / t.abs().max(1.0))
            .max((r.df - df).abs() / df.max(1.0))
            .max((r.p - p).abs());
    }

    let a = grid_score(&[5.0; 5]);
    let b = grid_score(&[9.0, 9.0, 9.0, 9.0, -11.0]);
    let winner = select_best(&[Some(a), Some(b)]);
    let tie = select_best(&[Some(b), Some(a), Some(a)]);
    let grid_ok = a == 5.0 && b == -3.0 && winner == Some(0) && tie == Some(1);

    let passed = identical && worst < WELCH_TOL && grid_ok;
    Ok((
        passed,
        format!(
            "repeated run CSVs bit-identical: {identical}; Welch vs oracle max deviation {worst:.1e} (< {WELCH_TOL:.0e}); \
             grid winner A (score {a}) over B (score {b}), tie to lower index: {grid_ok}"
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> (tempfile::TempDir, CheckContext) {
        let dir = tempfile::tempdir().unwrap();
        let ctx = CheckContext {
            scratch: dir.path().to_path_buf(),
            jobs: 2,
        };
        (dir, ctx)
    }

    #[test]
    fn oracle_matches_reference_value() {
        let (t, df, p) = welch_oracle(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!((t + 1.0).abs() < 1e-12 && (df - 8.0).abs() < 1e-12);
        assert!((p - 0.346_593_507_087_334).abs() < 1e-12, "{p}");
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-13);
        assert!((incomplete_beta(2.0, 3.0, 0.4) - 0.5248).abs() < 1e-12);
    }

    #[test]
    fn cycle_values_solve_bellman() {
        let v = cycle_values(0.9);
        for s in 0..3 {
            assert!((v[s] - CYCLE_REWARDS[s] - 0.9 * v[(s + 1) % 3]).abs() < 1e-10);
        }
    }

    #[test]
    fn fast_criteria_pass() {
        let (_d, c) = ctx();
        for id in [1, 2, 3, 7, 9, 10] {
            let o = run_check(id, &c).unwrap();
            assert!(o.passed, "{}", o.line());
        }
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let g = fd_gradient(&[1.0, -2.0], 1e-5, |x| x[0] * x[0] + 3.0 * x[1]);
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }
}
