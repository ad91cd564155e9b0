use std::fs;

use ccbench::harness::run::{metrics_path, policy_path, seed_dir};
use ccbench::harness::{build_table, collect_performances, read_metrics, run_experiment, ExperimentConfig, CSV_HEADER};
use ccbench::nn::{checkpoint, GaussianPolicy};

fn config(algo: &str, seeds: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "[task]\nid = \"cartpole_swingup\"\n[algorithm]\nid = \"{algo}\"\npolicy = \"mlp(6:tanh)\"\n\
         [protocol]\nsim_steps_per_iter = 600\nnum_iterations = 4\nhorizon = 150\nseeds = [{seeds}]\ncheckpoint_every = 2\n"
    ))
    .unwrap()
}

#[test]
fn every_algorithm_runs_and_is_reproducible() {
    for algo in ["random", "reinforce", "tnpg", "trpo", "rwr", "reps", "cem", "cmaes"] {
        let exp = config(algo, "3").resolve().unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for d in [&a, &b] {
            for r in run_experiment(&exp, d.path(), 1) {
                assert_eq!(r.rows.unwrap().len(), 4, "{algo}");
            }
        }
        let pa = metrics_path(&seed_dir(a.path(), &exp, 3));
        let text = fs::read_to_string(&pa).unwrap();
        assert!(text.starts_with(CSV_HEADER), "{algo}");
        assert_eq!(
            text,
            fs::read_to_string(metrics_path(&seed_dir(b.path(), &exp, 3))).unwrap(),
            "{algo}"
        );
        for row in read_metrics(&pa).unwrap() {
            assert!(row.steps >= 600, "{algo}");
            assert_eq!(row.wall_ms, 0);
        }
    }
}

#[test]
fn ddpg_runs_with_small_networks() {
    let cfg = ExperimentConfig::parse(
        "[algorithm]\nid = \"ddpg\"\nactor_hidden = [8]\ncritic_hidden = [8]\nwarmup_steps = 100\nbatch_size = 16\n\
         [protocol]\nsim_steps_per_iter = 300\nnum_iterations = 2\nhorizon = 100\nseeds = [0]\n",
    )
    .unwrap();
    let exp = cfg.resolve().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows = run_experiment(&exp, dir.path(), 1).pop().unwrap().rows.unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.mean_kl.is_none()));
    assert!(policy_path(&seed_dir(dir.path(), &exp, 0), 1).exists());
}

#[test]
fn checkpoint_restores_policy() {
    let exp = config("trpo", "1").resolve().unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&exp, dir.path(), 1);
    let (desc, params) = checkpoint::load::<f64>(&policy_path(&seed_dir(dir.path(), &exp, 1), 3)).unwrap();
    let mut pi = GaussianPolicy::<f64>::from_descriptor(&desc).unwrap();
    pi.set_params(&params).unwrap();
    assert_eq!(pi.params(), &params[..]);
}

#[test]
fn table_from_results_directory() {
    let dir = tempfile::tempdir().unwrap();
    for algo in ["trpo", "random"] {
        let exp = config(algo, "0, 1, 2").resolve().unwrap();
        for r in run_experiment(&exp, dir.path(), 2) {
            r.rows.unwrap();
        }
    }
    let perfs = collect_performances(dir.path()).unwrap();
    assert_eq!(perfs.len(), 2);
    assert!(perfs.values().all(|v| v.len() == 3));
    let table = build_table(&perfs);
    assert_eq!(table.algorithms, vec!["random", "trpo"]);
    assert_eq!(table.cells.values().filter(|c| c.best).count(), 1);
    assert!(table.render_text().starts_with("task"));
}
