use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ccbench::checks::{run_all, run_check, CheckContext};
use ccbench::harness::{
    build_table, collect_performances, grid_search, run_experiment, seed_performance, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "ccbench", version, about = "Continuous-control policy search benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Number of iterations, overriding the config.
    #[arg(long)]
    iters: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Concurrent jobs (seeds or grid points).
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, one metrics file per seed.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Grid-search the `[grid]` axes of a config.
    Grid {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build the comparison table from a results directory.
    Table {
        results: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the acceptance self-tests.
    Check {
        /// Run only these criteria (1-10); default is all, plus the end-to-end criterion 11.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<usize>>,
        /// Scratch directory for experiment checks; a temporary directory by default.
        #[arg(long)]
        scratch: Option<PathBuf>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
}

fn load(config: &Path, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config).with_context(|| format!("reading {}", config.display()))?;
    if let Some(s) = &common.seeds {
        cfg.protocol.seeds = Some(s.clone());
    }
    if let Some(n) = common.iters {
        cfg.protocol.num_iterations = Some(n);
    }
    Ok(cfg)
}

fn run(config: PathBuf, common: Common) -> Result<()> {
    let exp = load(&config, &common)?.resolve()?;
    let runs = run_experiment(&exp, &common.out, common.jobs);
    let mut failed = 0;
    for r in runs {
        match r.rows {
            Ok(rows) => println!(
                "{}/{} seed {}: {} iterations, performance {:.3}",
                exp.task_label,
                exp.algorithm.id,
                r.seed,
                rows.len(),
                seed_performance(&rows)?
            ),
            Err(e) => {
                failed += 1;
                eprintln!("seed {} failed: {e}", r.seed);
            }
        }
    }
    if failed > 0 {
        bail!("{failed} seed(s) failed");
    }
    Ok(())
}

fn grid(config: PathBuf, common: Common) -> Result<()> {
    let cfg = load(&config, &common)?;
    let outcome = grid_search(&cfg, &common.out, common.jobs)?;
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("grid.csv"), outcome.to_csv())?;
    for (i, p) in outcome.points.iter().enumerate() {
        let a: Vec<String> = p.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
        match p.score {
            Some(s) => println!("point {i} [{}]: score {s:.3}", a.join(", ")),
            None => println!("point {i} [{}]: failed ({})", a.join(", "), p.errors.join("; ")),
        }
    }
    let best = outcome.best_point();
    let a: Vec<String> = best.assignments.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    println!("best point {}: {}", outcome.best, a.join(", "));
    Ok(())
}

fn table(results: PathBuf, csv: Option<PathBuf>) -> Result<()> {
    let perfs = collect_performances(&results).with_context(|| format!("reading {}", results.display()))?;
    if perfs.is_empty() {
        bail!("no metrics found under {}", results.display());
    }
    let t = build_table(&perfs);
    print!("{}", t.render_text());
    if let Some(path) = csv {
        fs::write(&path, t.render_csv())?;
    }
    Ok(())
}

fn check(only: Option<Vec<usize>>, scratch: Option<PathBuf>, jobs: usize) -> Result<bool> {
    let tmp;
    let scratch = match scratch {
        Some(p) => {
            fs::create_dir_all(&p)?;
            p
        }
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    let ctx = CheckContext { scratch, jobs };
    let outcomes = match only {
        Some(ids) => {
            let mut v = Vec::new();
            for id in ids {
                let o = run_check(id, &ctx)?;
                println!("{}", o.line());
                v.push(o);
            }
            v
        }
        None => run_all(&ctx, |o| println!("{}", o.line())),
    };
    Ok(outcomes.iter().all(|o| o.passed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, common } => run(config, common),
        Command::Grid { config, common } => grid(config, common),
        Command::Table { results, csv } => table(results, csv),
        Command::Check { only, scratch, jobs } => match check(only, scratch, jobs) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("some criteria failed");
                return ExitCode::FAILURE;
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
