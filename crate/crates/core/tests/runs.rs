use std::path::Path;

use prcg::envs::{Band, EnvKind, PoseMode};
use prcg::harness::{k_search, read_metrics, run, ExperimentConfig};
use prcg::parallel::Strategy;

fn tiny(env: EnvKind, strategy: Strategy, models: usize, iterations: usize, dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.env.name = env;
    c.algorithm.strategy = strategy;
    c.algorithm.models = models;
    c.algorithm.k = 2;
    c.run.total_iterations = iterations;
    c.run.eval_every = 2;
    c.run.eval_episodes_per_band = 4;
    c.run.output_dir = dir.to_path_buf();
    c
}

#[test]
fn single_model_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tiny(EnvKind::PointMaze, Strategy::NoExchange, 1, 5, tmp.path());
    let a = run(&c).unwrap();
    let rows = read_metrics(&tmp.path().join("metrics.csv")).unwrap();
    let training: Vec<_> = rows.iter().filter(|r| !r.is_eval()).collect();
    assert!(training.len() >= 5);
    assert!(rows.iter().all(|r| r.run_id == c.run_id()));
    assert_eq!(a.outcome.final_eval.len(), 6);
    for name in ["pool_snapshots.csv", "final_eval.csv", "manifest.txt"] {
        assert!(tmp.path().join(name).is_file(), "{name} missing");
    }
    assert!(!tmp.path().join("FAILED").exists());
}

#[test]
fn every_strategy_runs() {
    for strategy in [
        Strategy::SwapCritics,
        Strategy::SwapInitPools,
        Strategy::CommonPoolSwapCritics,
        Strategy::CommonPoolNoSwap,
        Strategy::NoExchange,
        Strategy::AsyncSync,
        Strategy::Ensemble,
    ] {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = tiny(EnvKind::NarrowPassage, strategy, 2, 4, tmp.path());
        c.algorithm.async_sync_period = 2;
        let a = run(&c).unwrap_or_else(|e| panic!("{}: {e}", strategy.name()));
        assert_eq!(a.models.iteration, 4, "{}", strategy.name());
    }
}

#[test]
fn same_seed_same_bytes_across_thread_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, parallel) in [(0, true), (1, true), (2, false)] {
        let dir = tmp.path().join(i.to_string());
        let mut c = tiny(EnvKind::PointMazeOpen, Strategy::SwapCritics, 4, 4, &dir);
        c.run.parallel = parallel;
        c.run.run_name = Some("det".into());
        run(&c).unwrap();
        outputs.push((
            std::fs::read(dir.join("metrics.csv")).unwrap(),
            std::fs::read(dir.join("pool_snapshots.csv")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1]);
    assert!(outputs[0] == outputs[2]);
}

#[test]
fn different_seeds_differ() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for seed in [0, 1] {
        let dir = tmp.path().join(seed.to_string());
        let mut c = tiny(EnvKind::PointMaze, Strategy::NoExchange, 1, 2, &dir);
        c.run.master_seed = seed;
        c.run.run_name = Some("seed".into());
        run(&c).unwrap();
        bytes.push(std::fs::read(dir.join("metrics.csv")).unwrap());
    }
    assert_ne!(bytes[0], bytes[1]);
}

#[test]
fn inverted_return_band_rejected_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let mut c = tiny(EnvKind::PointMaze, Strategy::NoExchange, 1, 2, &dir);
    c.curriculum.r_min = 0.96;
    c.curriculum.r_max = 0.96;
    let e = run(&c).err().expect("r_min = r_max must fail");
    assert!(e.is_config());
    assert!(!dir.join("metrics.csv").exists());
}

#[test]
fn ksearch_summary_matches_final_evals() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tiny(EnvKind::PointMaze, Strategy::SwapCritics, 2, 3, tmp.path());
    let seeds = [0, 1];
    let summary = k_search(&c, &[1, 2], 3, &seeds, tmp.path()).unwrap();
    let far_variable = |dir: &Path| -> f64 {
        read_metrics(&dir.join("final_eval.csv"))
            .unwrap()
            .iter()
            .find(|r| r.band == Some(Band::Far) && r.pose_mode == Some(PoseMode::Variable))
            .unwrap()
            .success_rate
    };
    for k in [1, 2] {
        let row = summary.row(k).unwrap();
        let values: Vec<f64> = seeds
            .iter()
            .map(|s| far_variable(&tmp.path().join(format!("k{k}/seed{s}"))))
            .collect();
        assert_eq!(row.per_seed, values);
        assert!((row.mean - (values[0] + values[1]) / 2.0).abs() < 1e-12);
        assert!((row.std - (values[0] - values[1]).abs() / 2f64.sqrt()).abs() < 1e-12);
    }
    let base: Vec<f64> = seeds
        .iter()
        .map(|s| far_variable(&tmp.path().join(format!("baseline/seed{s}"))))
        .collect();
    assert_eq!(summary.baseline.per_seed, base);
    let text = std::fs::read_to_string(tmp.path().join("ksearch_summary.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}
