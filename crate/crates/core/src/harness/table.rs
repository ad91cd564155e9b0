//! Comparison tables with significance-based highlighting.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::Result;

use super::config::AlgorithmId;
use super::metrics::read_metrics;
use super::run::seed_performance;
use super::stats::{mean, population_std, welch_t_test};

/// Significance level of the indistinguishability test.
pub const ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub performances: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub best: bool,
    pub bold: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub tasks: Vec<String>,
    pub algorithms: Vec<String>,
    /// Keyed by `(task, algorithm)`; absent cells render as N/A.
    pub cells: BTreeMap<(String, String), Cell>,
}

fn algorithm_order(name: &str) -> (usize, String) {
    let rank = name
        .parse::<AlgorithmId>()
        .map(|a| AlgorithmId::ALL.iter().position(|&b| b == a).unwrap_or(usize::MAX))
        .unwrap_or(usize::MAX);
    (rank, name.to_string())
}

/// Builds the table from per-seed performances.
///
/// The best cell per task has the highest mean (earlier algorithm on ties).
/// Another cell is bold when Welch's test against the best gives `p >= 0.05`;
/// cells with fewer than two seeds cannot be tested and are bold only if best.
pub fn build_table(performances: &BTreeMap<(String, String), Vec<f64>>) -> ComparisonTable {
    let tasks: BTreeSet<String> = performances.keys().map(|(t, _)| t.clone()).collect();
    let mut algorithms: Vec<String> = performances
        .keys()
        .map(|(_, a)| a.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    algorithms.sort_by_key(|a| algorithm_order(a));
    let mut cells = BTreeMap::new();
    for task in &tasks {
        let present: Vec<(&String, &Vec<f64>)> = algorithms
            .iter()
            .filter_map(|a| {
                performances
                    .get(&(task.clone(), a.clone()))
                    .filter(|v| !v.is_empty() && v.iter().all(|x| x.is_finite()))
                    .map(|v| (a, v))
            })
            .collect();
        let best = present
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, (_, v))| {
                let m = mean(v);
                match acc {
                    Some((_, b)) if m <= b => acc,
                    _ => Some((i, m)),
                }
            })
            .map(|(i, _)| i);
        for (i, (algo, v)) in present.iter().enumerate() {
            let is_best = Some(i) == best;
            let bold =
                is_best || best.is_some_and(|b| welch_t_test(present[b].1, v).map(|r| r.p >= ALPHA).unwrap_or(false));
            cells.insert(
                (task.clone(), (*algo).clone()),
                Cell {
                    performances: (*v).clone(),
                    mean: mean(v),
                    std: population_std(v),
                    best: is_best,
                    bold,
                },
            );
        }
    }
    ComparisonTable {
        tasks: tasks.into_iter().collect(),
        algorithms,
        cells,
    }
}

/// Reads `<dir>/<task>/<algo>/seed*/metrics.csv` into per-seed performances.
///
/// Seeds with an empty or unreadable metrics file are skipped with a warning.
pub fn collect_performances(dir: &Path) -> Result<BTreeMap<(String, String), Vec<f64>>> {
    let mut out = BTreeMap::new();
    for task in sorted_dirs(dir)? {
        for algo in sorted_dirs(&task)? {
            let mut perfs = Vec::new();
            for seed in sorted_dirs(&algo)? {
                let path = seed.join("metrics.csv");
                if !path.exists() {
                    continue;
                }
                match read_metrics(&path).and_then(|rows| seed_performance(&rows)) {
                    Ok(p) => perfs.push(p),
                    Err(e) => log::warn!("skipping {}: {e}", path.display()),
                }
            }
            if !perfs.is_empty() {
                out.insert((file_name(&task), file_name(&algo)), perfs);
            }
        }
    }
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn sorted_dirs(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut v: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    Ok(v)
}

fn fmt_cell(c: &Cell) -> String {
    let s = format!("{:.1} ± {:.1}", c.mean, c.std);
    if c.bold {
        format!("*{s}*")
    } else {
        s
    }
}

impl ComparisonTable {
    /// Aligned plain text; bold cells are wrapped in `*`.
    pub fn render_text(&self) -> String {
        let mut rows = vec![std::iter::once("task".to_string())
            .chain(self.algorithms.iter().cloned())
            .collect::<Vec<_>>()];
        for t in &self.tasks {
            let mut r = vec![t.clone()];
            for a in &self.algorithms {
                r.push(
                    self.cells
                        .get(&(t.clone(), a.clone()))
                        .map(fmt_cell)
                        .unwrap_or_else(|| "N/A".into()),
                );
            }
            rows.push(r);
        }
        let ncol = rows[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (s, &w))| {
                    let pad = w - s.chars().count();
                    if j == 0 {
                        format!("{s}{}", " ".repeat(pad))
                    } else {
                        format!("{}{s}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// One line per `(task, algorithm)`, including N/A cells with empty numbers.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("task,algorithm,mean,std,seeds,best,bold\n");
        for t in &self.tasks {
            for a in &self.algorithms {
                match self.cells.get(&(t.clone(), a.clone())) {
                    Some(c) => out.push_str(&format!(
                        "{t},{a},{},{},{},{},{}\n",
                        c.mean,
                        c.std,
                        c.performances.len(),
                        c.best,
                        c.bold
                    )),
                    None => out.push_str(&format!("{t},{a},N/A,N/A,0,false,false\n")),
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, &str, &[f64])]) -> ComparisonTable {
        let m = entries
            .iter()
            .map(|(t, a, v)| ((t.to_string(), a.to_string()), v.to_vec()))
            .collect();
        build_table(&m)
    }

    fn cell<'a>(t: &'a ComparisonTable, task: &str, algo: &str) -> &'a Cell {
        &t.cells[&(task.to_string(), algo.to_string())]
    }

    #[test]
    fn single_algorithm_is_bold() {
        let t = table(&[("a", "trpo", &[1.0, 2.0, 3.0])]);
        assert!(cell(&t, "a", "trpo").bold && cell(&t, "a", "trpo").best);
    }

    #[test]
    fn identical_results_both_bold() {
        let v = [1.0, 4.0, 2.0, 8.0, 5.0];
        let t = table(&[("a", "trpo", &v), ("a", "tnpg", &v)]);
        assert!(cell(&t, "a", "trpo").bold && cell(&t, "a", "tnpg").bold);
        assert_eq!(t.cells.values().filter(|c| c.best).count(), 1);
        assert!(cell(&t, "a", "tnpg").best, "tie goes to the earlier column");
    }

    #[test]
    fn separated_results_only_best_bold() {
        let t = table(&[
            ("a", "trpo", &[100.0, 101.0, 99.0, 100.5, 99.5]),
            ("a", "reps", &[0.0, 1.0, -1.0, 0.5, -0.5]),
        ]);
        assert!(cell(&t, "a", "trpo").bold);
        assert!(!cell(&t, "a", "reps").bold);
    }

    #[test]
    fn missing_cells_render_na() {
        let t = table(&[("a", "trpo", &[1.0, 2.0]), ("b", "cem", &[3.0, 4.0])]);
        let text = t.render_text();
        assert!(text.contains("N/A"));
        assert_eq!(t.algorithms, vec!["trpo", "cem"]);
        assert!(t.render_csv().contains("b,trpo,N/A"));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
    }
}
