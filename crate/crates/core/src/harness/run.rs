//! Running experiments: one metrics file per seed, checkpoints, and resume.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::mdp::performance_metric;
use crate::nn::checkpoint;
use crate::wrappers::build_env;

use super::config::Experiment;
use super::learner::build_learner;
use super::metrics::{read_metrics, IterationRecord, MetricsRow, MetricsWriter};

/// `<out>/<task>/<algo>/seed<k>`.
pub fn seed_dir(out: &Path, exp: &Experiment, seed: u64) -> PathBuf {
    out.join(&exp.task_label)
        .join(exp.algorithm.id.id())
        .join(format!("seed{seed}"))
}

pub fn metrics_path(dir: &Path) -> PathBuf {
    dir.join("metrics.csv")
}

pub fn policy_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("iter{iteration}.policy"))
}

pub fn state_path(dir: &Path) -> PathBuf {
    dir.join("state.bin")
}

fn state_descriptor(exp: &Experiment, completed: usize) -> String {
    format!("state algo={} completed={completed}", exp.algorithm.id)
}

fn parse_state_descriptor(exp: &Experiment, desc: &str) -> Option<usize> {
    let rest = desc.strip_prefix(&format!("state algo={} completed=", exp.algorithm.id))?;
    rest.parse().ok()
}

/// Comparable text of a row without its wall-clock column.
fn row_key(row: &MetricsRow) -> String {
    let mut r = row.clone();
    r.wall_ms = 0;
    r.to_csv()
}

/// Runs (or resumes) one seed and returns its rows as read back from disk.
///
/// Iterations already present in the metrics file are never rewritten. When the
/// learner's state file is older than the file, the missing iterations are
/// recomputed from the nearest state and must reproduce the recorded rows.
pub fn run_seed(exp: &Experiment, seed: u64, out: &Path) -> Result<Vec<MetricsRow>> {
    let p = &exp.protocol;
    let dir = seed_dir(out, exp, seed);
    std::fs::create_dir_all(&dir)?;
    let mpath = metrics_path(&dir);
    let done = if mpath.exists() {
        read_metrics(&mpath)?
    } else {
        Vec::new()
    };
    if done.len() >= p.num_iterations {
        return Ok(done[..p.num_iterations].to_vec());
    }

    let mut env = build_env(exp.task, exp.physics.clone(), &exp.wrappers)?;
    let mut learner = build_learner(exp, env.as_ref(), seed)?;
    let mut start = 0;
    if !done.is_empty() && state_path(&dir).exists() {
        let (desc, state) = checkpoint::load::<f64>(&state_path(&dir))?;
        if let Some(k) = parse_state_descriptor(exp, &desc).filter(|&k| k <= done.len()) {
            learner.load_state(&state)?;
            start = k;
        }
    }
    if start < done.len() {
        log::info!("seed {seed}: recomputing iterations {start}..{}", done.len());
    }
    for (it, recorded) in done.iter().enumerate().skip(start) {
        let o = learner.iterate(env.as_mut(), it)?;
        let row = IterationRecord {
            seed,
            iteration: it,
            returns: o.returns,
            mean_kl: o.mean_kl,
            steps: o.steps,
            wall_ms: 0,
        }
        .to_row()?;
        if row_key(&row) != row_key(recorded) {
            return Err(Error::Metrics {
                path: mpath.display().to_string(),
                reason: format!("iteration {it} does not reproduce; was the config changed?"),
            });
        }
    }

    let mut writer = MetricsWriter::open(&mpath, done.len())?;
    for it in done.len()..p.num_iterations {
        let t0 = Instant::now();
        let o = learner.iterate(env.as_mut(), it)?;
        let wall_ms = if p.record_wall_time {
            t0.elapsed().as_millis() as u64
        } else {
            0
        };
        let row = IterationRecord {
            seed,
            iteration: it,
            returns: o.returns,
            mean_kl: o.mean_kl,
            steps: o.steps,
            wall_ms,
        }
        .to_row()?;
        writer.append(&row)?;
        log::debug!("seed {seed} iteration {it}: mean return {}", row.mean_return);
        let completed = it + 1;
        if completed % p.checkpoint_every == 0 || completed == p.num_iterations {
            let (desc, params) = learner.checkpoint();
            checkpoint::save(&policy_path(&dir, it), &desc, &params)?;
            if let Some(state) = learner.state() {
                checkpoint::save(&state_path(&dir), &state_descriptor(exp, completed), &state)?;
            }
        }
    }
    read_metrics(&mpath)
}

/// Result of one seed of an experiment.
#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub rows: Result<Vec<MetricsRow>>,
}

/// Runs every seed, `jobs` at a time.
pub fn run_experiment(exp: &Experiment, out: &Path, jobs: usize) -> Vec<SeedRun> {
    parallel_map(&exp.protocol.seeds, jobs, |&seed| SeedRun {
        seed,
        rows: run_seed(exp, seed, out),
    })
}

/// Performance of one seed: the mean over every trajectory of every iteration.
pub fn seed_performance(rows: &[MetricsRow]) -> Result<f64> {
    let per_iter: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.mean_return; r.episodes]).collect();
    performance_metric(&per_iter)
}

/// Applies `f` to every item on up to `jobs` threads, preserving order.
pub fn parallel_map<I: Sync, O: Send>(items: &[I], jobs: usize, f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<O>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let o = f(&items[i]);
                results.lock().expect("result lock")[i] = Some(o);
            });
        }
    });
    results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|o| o.expect("every item processed"))
        .collect()
}
