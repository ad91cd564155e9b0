//! Hyperparameter grid search under the mean-minus-std criterion.

use std::path::Path;

use crate::error::{Error, Result};

use super::config::{Experiment, ExperimentConfig};
use super::run::{parallel_map, run_seed, seed_performance};
use super::stats::{mean, population_std};

/// `mean - std` of per-seed performances, with the population standard deviation.
pub fn grid_score(performances: &[f64]) -> f64 {
    mean(performances) - population_std(performances)
}

/// Index of the highest score; ties go to the lower index. Non-finite scores never win.
pub fn select_best(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = s.filter(|s| s.is_finite()) {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Debug)]
pub struct GridPoint {
    pub assignments: Vec<(String, toml::Value)>,
    pub performances: Vec<f64>,
    /// `None` if any seed failed.
    pub score: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub points: Vec<GridPoint>,
    pub best: usize,
}

impl GridOutcome {
    pub fn best_point(&self) -> &GridPoint {
        &self.points[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("point,assignments,mean,std,score,best\n");
        for (i, p) in self.points.iter().enumerate() {
            let a: Vec<String> = p.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let (m, sd) = if p.performances.is_empty() {
                (String::new(), String::new())
            } else {
                (
                    mean(&p.performances).to_string(),
                    population_std(&p.performances).to_string(),
                )
            };
            s.push_str(&format!(
                "{i},{},{m},{sd},{},{}\n",
                a.join(";"),
                p.score.map(|x| x.to_string()).unwrap_or_default(),
                i == self.best
            ));
        }
        s
    }
}

/// Runs every grid point under every seed and picks the best point.
///
/// Point `k` writes under `<out>/point<k>/`. A point with any failed seed is
/// not eligible.
pub fn grid_search(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<GridOutcome> {
    let assignments = config.grid_points()?;
    let exps: Vec<Experiment> = assignments
        .iter()
        .map(|a| config.with_assignments(a)?.resolve())
        .collect::<Result<_>>()?;
    let jobs_list: Vec<(usize, u64)> = exps
        .iter()
        .enumerate()
        .flat_map(|(k, e)| e.protocol.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results = parallel_map(&jobs_list, jobs, |&(k, seed)| {
        run_seed(&exps[k], seed, &out.join(format!("point{k}"))).and_then(|rows| seed_performance(&rows))
    });
    let mut points: Vec<GridPoint> = assignments
        .into_iter()
        .map(|assignments| GridPoint {
            assignments,
            performances: Vec::new(),
            score: None,
            errors: Vec::new(),
        })
        .collect();
    for (&(k, seed), r) in jobs_list.iter().zip(results) {
        match r {
            Ok(perf) => points[k].performances.push(perf),
            Err(e) => points[k].errors.push(format!("seed {seed}: {e}")),
        }
    }
    for p in &mut points {
        if p.errors.is_empty() && !p.performances.is_empty() {
            p.score = Some(grid_score(&p.performances));
        }
    }
    let scores: Vec<Option<f64>> = points.iter().map(|p| p.score).collect();
    match select_best(&scores) {
        Some(best) => Ok(GridOutcome { points, best }),
        None => {
            let diag: Vec<String> = points
                .iter()
                .enumerate()
                .map(|(i, p)| format!("point {i}: {}", p.errors.join("; ")))
                .collect();
            Err(Error::Numerical(format!(
                "every grid point failed:\n{}",
                diag.join("\n")
            )))
        }
    }
}
