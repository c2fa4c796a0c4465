use std::cell::Cell;

use rand::SeedableRng;

use super::*;
use crate::envs::{EnvKind, EnvOverrides};

/// Stands still for `wait` steps, then moves by `action` every step.
struct Scripted {
    wait: usize,
    action: Vec<f64>,
    calls: Cell<usize>,
}

impl Scripted {
    fn new(wait: usize, action: Vec<f64>) -> Self {
        Self {
            wait,
            action,
            calls: Cell::new(0),
        }
    }
}

impl Actor for Scripted {
    fn sample_action(&self, state: &[f64], _rng: &mut RandomStream) -> Result<(Vec<f64>, f64)> {
        Ok((self.mean_action(state)?, 0.0))
    }

    fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let k = self.calls.get();
        self.calls.set(k + 1);
        if k < self.wait {
            Ok(vec![0.0; state.len()])
        } else {
            Ok(self.action.clone())
        }
    }
}

/// Heads straight for a single goal at full speed.
struct Straight {
    goal: Vec<f64>,
    speed: f64,
}

impl Actor for Straight {
    fn sample_action(&self, state: &[f64], _rng: &mut RandomStream) -> Result<(Vec<f64>, f64)> {
        Ok((self.mean_action(state)?, 0.0))
    }

    fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let d: Vec<f64> = self.goal.iter().zip(state).map(|(g, s)| g - s).collect();
        let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let step = self.speed.min(n);
        Ok(d.iter().map(|x| x / n * step).collect())
    }
}

fn estimate(r_hat: f64) -> ReturnEstimate {
    ReturnEstimate {
        start: vec![r_hat, 0.0],
        r_hat,
        successes: 0,
        rollouts: 1,
    }
}

fn small_config() -> CurriculumConfig {
    CurriculumConfig {
        n_new: 20,
        n_old: 10,
        n_total: 100,
        rollouts_per_start: 2,
        ..CurriculumConfig::default()
    }
}

#[test]
fn nearby_states_are_feasible_and_counted() {
    let env = PointEnv::point_maze();
    let mut rng = RandomStream::seed_from_u64(1);
    let seeds = vec![env.spec().goal_states[0].clone(), env.fixed_start(crate::envs::Band::Mid).clone()];
    let out = sample_nearby(&env, &seeds, 500, &[0.05, 0.05], 200, &mut rng).unwrap();
    assert_eq!(out.len(), 200);
    assert!(out.iter().all(|s| env.is_feasible(s)));
}

#[test]
fn zero_noise_stays_at_seed() {
    let env = PointEnv::point_maze();
    let mut rng = RandomStream::seed_from_u64(2);
    let seed = vec![0.3, 0.3];
    let out = sample_nearby(&env, &[seed.clone()], 50, &[0.0, 0.0], 30, &mut rng).unwrap();
    assert!(out.iter().all(|s| *s == seed));
}

#[test]
fn nearby_rejects_bad_seeds() {
    let env = PointEnv::point_maze();
    let mut rng = RandomStream::seed_from_u64(3);
    assert!(matches!(sample_nearby(&env, &[], 10, &[0.01, 0.01], 5, &mut rng), Err(Error::Usage(_))));
    let inside_wall = vec![0.62, 0.2];
    assert!(matches!(
        sample_nearby(&env, &[inside_wall], 10, &[0.01, 0.01], 5, &mut rng),
        Err(Error::Reset(_))
    ));
}

/// With one seed and `n_total = 1 + t_max` the buffer is exactly one random
/// walk, so the k-th state has per-axis displacement variance k·σ².
#[test]
fn single_walk_matches_gaussian_random_walk() {
    let env = PointEnv::point_maze_open();
    let seed = vec![0.5, 0.5];
    let sigma = 0.01;
    let t_max = env.spec().t_max;
    let runs = 2000;
    let mut rng = RandomStream::seed_from_u64(4);
    let mut totals = Vec::with_capacity(runs);
    for _ in 0..runs {
        let out = sample_nearby(&env, &[seed.clone()], 1 + t_max, &[sigma; 2], 1 + t_max, &mut rng).unwrap();
        let sq: f64 = out
            .iter()
            .map(|s| (s[0] - seed[0]).powi(2) + (s[1] - seed[1]).powi(2))
            .sum();
        totals.push(sq);
    }
    let n = runs as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    // Σ_{k=0..t_max} 2·k·σ²
    let expected = 2.0 * sigma * sigma * (t_max * (t_max + 1) / 2) as f64;
    assert!((mean - expected).abs() < 4.0 * se, "mean {mean} expected {expected} se {se}");
}

#[test]
fn discounted_return_of_scripted_success() {
    let mut env = PointEnv::point_maze();
    let start = env.fixed_start(crate::envs::Band::Near).clone();
    let mut rng = RandomStream::seed_from_u64(5);
    for (t, expected) in [(3, 0.970299), (5, 0.950990), (7, 0.932065)] {
        let actor = Scripted::new(t, vec![0.05, 0.05]);
        let est = estimate_return(&mut env, &actor, &start, 1, None, &mut rng).unwrap();
        assert!((est.r_hat - 0.99f64.powi(t as i32)).abs() < 1e-15);
        assert!((est.r_hat - expected).abs() < 1e-6);
        assert_eq!(est.successes, 1);
    }
}

#[test]
fn straight_line_arrival() {
    let o = EnvOverrides {
        goal: Some(vec![0.5, 0.5]),
        goal_radius: Some(0.01),
        ..EnvOverrides::default()
    };
    let mut env = PointEnv::with_overrides(EnvKind::PointMazeOpen, &o).unwrap();
    let mut rng = RandomStream::seed_from_u64(6);
    let actor = Scripted::new(0, vec![0.02, 0.0]);
    let est = estimate_return(&mut env, &actor, &[0.38, 0.5], 1, None, &mut rng).unwrap();
    assert!((est.r_hat - 0.95099).abs() < 1e-5);
}

#[test]
fn never_reaching_scores_zero() {
    let mut env = PointEnv::point_maze();
    let mut rng = RandomStream::seed_from_u64(7);
    let actor = Scripted::new(usize::MAX, vec![0.0, 0.0]);
    let est = estimate_return(&mut env, &actor, &[0.2, 0.2], 5, None, &mut rng).unwrap();
    assert_eq!(est.r_hat, 0.0);
    assert_eq!(est.successes, 0);
}

#[test]
fn filter_bounds_are_strict() {
    let kept = select_good_starts(
        &[estimate(0.93), estimate(0.96), estimate(0.99f64.powi(6)), estimate(0.95), estimate(1.0)],
        0.93,
        0.96,
    );
    assert_eq!(kept, vec![vec![0.99f64.powi(6), 0.0], vec![0.95, 0.0]]);
    assert!(select_good_starts(&[], 0.93, 0.96).is_empty());
}

#[test]
fn exactly_steps_five_to_seven_pass() {
    let passing: Vec<usize> = (0..10)
        .filter(|t| !select_good_starts(&[estimate(0.99f64.powi(*t as i32))], 0.93, 0.96).is_empty())
        .collect();
    assert_eq!(passing, vec![5, 6, 7]);
}

#[test]
fn distinct_keeps_first_occurrence() {
    let list = vec![vec![1.0, 2.0], vec![0.5, 0.5], vec![1.0, 2.0]];
    assert_eq!(distinct_states(&list), vec![vec![1.0, 2.0], vec![0.5, 0.5]]);
}

#[test]
fn pool_only_grows_and_tags_iterations() {
    let env = PointEnv::point_maze();
    let config = small_config();
    let mut pools = CurriculumPools::from_goals(&env.spec().goal_states);
    let mut sizes = vec![pools.starts_old.len()];
    for it in 1..=3 {
        let survivors = vec![(vec![0.1 * it as f64, 0.2], 0.94)];
        apply_survivors(&mut pools, vec![survivors[0].0.clone()], &survivors, it, &config);
        sizes.push(pools.starts_old.len());
    }
    assert!(sizes.windows(2).all(|w| w[1] == w[0] + 1));
    let tags: Vec<usize> = pools.starts_old.entries().iter().map(|e| e.added_at_iteration).collect();
    assert!(tags.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(pools.starts.len(), 1);
}

#[test]
#[should_panic(expected = "pool admission")]
fn admission_outside_bounds_panics() {
    let config = small_config();
    let mut pools = CurriculumPools::from_goals(&[vec![0.5, 0.5]]);
    apply_survivors(&mut pools, Vec::new(), &[(vec![0.1, 0.1], 0.99)], 1, &config);
}

#[test]
fn empty_survivors_fall_back_to_archive() {
    let mut env = PointEnv::point_maze();
    let config = small_config();
    let archive = StartPool::from_states(vec![vec![0.1, 0.1], vec![0.2, 0.1]], 0);
    let actor = Scripted::new(usize::MAX, vec![0.0, 0.0]);
    let mut rng = RandomStream::seed_from_u64(8);
    let list = vec![vec![0.3, 0.3], vec![0.4, 0.3]];
    let out = filter_start_list(&mut env, &actor, None, &list, &archive, &config, &mut rng).unwrap();
    assert!(out.fell_back);
    assert!(out.survivors.is_empty());
    assert_eq!(out.next_starts.len(), config.n_old);
    assert!(out.next_starts.iter().all(|s| archive.states().contains(s)));
}

/// With a deterministic full-speed policy the return of a start is
/// γ^(k−1), where k is the number of steps needed to cover the distance to
/// the goal boundary.
#[test]
fn survivors_match_arrival_time_oracle() {
    let mut env = PointEnv::point_maze_open();
    let goal = env.spec().goal_states[0].clone();
    let radius = env.spec().goal_radius;
    let speed = 0.05;
    let actor = Straight {
        goal: goal.clone(),
        speed,
    };
    let config = CurriculumConfig {
        rollouts_per_start: 1,
        ..small_config()
    };
    let mut rng = RandomStream::seed_from_u64(9);
    let list: Vec<State> = (0..400)
        .map(|_| vec![rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)])
        .collect();
    let archive = StartPool::from_goals(&[goal.clone()]);
    let out = filter_start_list(&mut env, &actor, None, &list, &archive, &config, &mut rng).unwrap();

    let oracle = |s: &State| -> bool {
        let d = ((s[0] - goal[0]).powi(2) + (s[1] - goal[1]).powi(2)).sqrt();
        if d <= radius {
            return false;
        }
        let k = ((d - radius) / speed).ceil() as i32;
        k <= env.spec().t_max as i32 && {
            let r = 0.99f64.powi(k - 1);
            0.93 < r && r < 0.96
        }
    };
    let kept: Vec<&State> = out.survivors.iter().map(|(s, _)| s).collect();
    let agree = list.iter().filter(|s| oracle(s) == kept.contains(s)).count();
    assert!(agree as f64 >= 0.95 * list.len() as f64, "agreement {agree}/{}", list.len());
    assert!(!kept.is_empty());
}

#[test]
fn curriculum_iteration_runs_end_to_end() {
    let mut env = PointEnv::point_maze();
    let mut rng = RandomStream::seed_from_u64(10);
    let learner = crate::ppo::ActorCritic::initialize(
        env.spec(),
        &crate::ppo::NetworkConfig {
            hidden_dims: vec![8],
            ..Default::default()
        },
        1e-3,
        &mut rng,
    )
    .unwrap();
    let config = small_config();
    let pools = CurriculumPools::from_goals(&env.spec().goal_states);
    let step = curriculum_iteration(&mut env, &learner.actor, &learner.critic, &pools, &config, 200, &mut rng).unwrap();
    assert_eq!(step.start_list.len(), config.n_new + config.n_old);
    assert!(step.batch.total_steps >= 200);
    assert!(step.outcome.estimates.len() <= step.start_list.len());
}
