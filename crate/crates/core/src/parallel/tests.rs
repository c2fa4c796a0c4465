use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};

use super::*;
use crate::envs::PointEnv;
use crate::numerics::{Agent, ParamVector};
use crate::ppo::PpoConfig;
use crate::rcg::{CurriculumConfig, PoolEntry};

fn tiny_network() -> NetworkConfig {
    NetworkConfig {
        hidden_dims: vec![8],
        ..NetworkConfig::default()
    }
}

fn tiny_configs() -> (CurriculumConfig, PpoConfig) {
    (
        CurriculumConfig {
            n_new: 20,
            n_old: 10,
            n_total: 60,
            rollouts_per_start: 2,
            ..CurriculumConfig::default()
        },
        PpoConfig {
            batch_size: 64,
            epochs_per_update: 2,
            minibatch_size: 32,
            ..PpoConfig::default()
        },
    )
}

fn tiny_options(iterations: usize) -> TrainOptions {
    TrainOptions {
        total_iterations: iterations,
        eval_every: 5,
        eval_episodes_per_band: 2,
        ..TrainOptions::default()
    }
}

fn schedule(strategy: Strategy, k: usize) -> SwapSchedule {
    SwapSchedule {
        strategy,
        k,
        async_sync_period: 10,
    }
}

fn model_set(m: usize, seed: u64, common: bool) -> ModelSet {
    ModelSet::new(&PointEnv::point_maze(), &tiny_network(), 1e-3, m, seed, common).unwrap()
}

/// Model set with randomised pools so pool swaps are observable.
fn random_model_set(m: usize, rng: &mut RandomStream) -> ModelSet {
    let mut set = model_set(m, rng.random(), false);
    if let PoolLayout::PerModel(pools) = &mut set.pools {
        for p in pools.iter_mut() {
            for it in 1..=rng.random_range(0..4usize) {
                p.starts_old.push(PoolEntry {
                    state: vec![rng.random(), rng.random()],
                    added_at_iteration: it,
                    r_hat: Some(0.94),
                });
            }
        }
    }
    set
}

fn critic_multiset(set: &ModelSet) -> BTreeMap<Vec<u64>, usize> {
    let mut out = BTreeMap::new();
    for l in &set.learners {
        let key: Vec<u64> = l.critic.params.iter().map(|x| x.to_bits()).collect();
        *out.entry(key).or_insert(0) += 1;
    }
    out
}

#[test]
fn pairing_is_perfect_matching() {
    let mut rng = RandomStream::seed_from_u64(1);
    for m in [2, 4, 6, 8] {
        for _ in 0..100 {
            let plan = make_pairing(m, &mut rng).unwrap();
            assert_eq!(plan.pairs.len(), m / 2);
            plan.validate(m).unwrap();
            assert!(plan.pairs.iter().all(|(i, j)| i != j));
        }
    }
    assert_eq!(make_pairing(2, &mut rng).unwrap().pairs, vec![(0, 1)]);
}

#[test]
fn odd_or_zero_model_counts_are_config_errors() {
    let mut rng = RandomStream::seed_from_u64(2);
    for m in [0, 1, 3, 5] {
        assert!(make_pairing(m, &mut rng).unwrap_err().is_config());
    }
    assert!(schedule(Strategy::SwapCritics, 20).validate(3).unwrap_err().is_config());
    assert!(schedule(Strategy::NoExchange, 20).validate(3).is_ok());
    assert!(schedule(Strategy::SwapCritics, 0).validate(2).is_err());
}

#[test]
fn four_model_pairings_are_uniform() {
    let mut rng = RandomStream::seed_from_u64(3);
    let mut counts: BTreeMap<Vec<(usize, usize)>, usize> = BTreeMap::new();
    let draws = 10_000;
    for _ in 0..draws {
        *counts.entry(make_pairing(4, &mut rng).unwrap().pairs).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 3);
    for c in counts.values() {
        assert!((*c as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.02);
    }
}

#[test]
fn invalid_plans_are_rejected() {
    let mut set = model_set(4, 4, false);
    let bad = PairingPlan { pairs: vec![(0, 1), (1, 2)] };
    assert!(swap_critics(&mut set, &bad).is_err());
    let partial = PairingPlan { pairs: vec![(0, 1)] };
    assert!(swap_pools(&mut set, &partial).is_err());
}

#[test]
fn critic_swap_moves_critic_and_optimizer_only() {
    let mut set = model_set(2, 5, false);
    let n = set.learners[0].critic.params.len();
    set.learners[0].critic.params = ParamVector(vec![1.0; n]);
    set.learners[1].critic.params = ParamVector(vec![2.0; n]);
    set.learners[1].critic_opt.step_count = 7;
    let actors: Vec<_> = set.learners.iter().map(|l| l.actor.clone()).collect();
    let pools = set.pools.clone();
    swap_critics(&mut set, &PairingPlan { pairs: vec![(0, 1)] }).unwrap();
    assert_eq!(set.learners[0].critic.params.0, vec![2.0; n]);
    assert_eq!(set.learners[0].critic_opt.step_count, 7);
    assert_eq!(set.learners[1].critic_opt.step_count, 0);
    assert_eq!(set.learners.iter().map(|l| l.actor.clone()).collect::<Vec<_>>(), actors);
    assert_eq!(set.pools, pools);
}

#[test]
fn swaps_are_involutions_preserving_multisets() {
    let mut rng = RandomStream::seed_from_u64(6);
    for _ in 0..200 {
        let m = 2 * rng.random_range(1..4);
        let original = random_model_set(m, &mut rng);
        let plan = make_pairing(m, &mut rng).unwrap();

        let mut set = original.clone();
        swap_critics(&mut set, &plan).unwrap();
        assert_eq!(critic_multiset(&set), critic_multiset(&original));
        swap_critics(&mut set, &plan).unwrap();
        assert_eq!(set, original);

        let mut set = original.clone();
        swap_pools(&mut set, &plan).unwrap();
        let PoolLayout::PerModel(before) = &original.pools else { unreachable!() };
        let PoolLayout::PerModel(after) = &set.pools else { unreachable!() };
        for &(i, j) in &plan.pairs {
            assert_eq!(after[i], before[j]);
            assert_eq!(after[j], before[i]);
        }
        assert_eq!(set.learners, original.learners);
        swap_pools(&mut set, &plan).unwrap();
        assert_eq!(set, original);
    }
}

#[test]
fn common_pool_cannot_be_swapped() {
    let mut set = model_set(2, 7, true);
    assert!(swap_pools(&mut set, &PairingPlan { pairs: vec![(0, 1)] }).is_err());
}

#[test]
fn opposite_deltas_cancel_at_sync() {
    let mut set = model_set(2, 8, false);
    init_central(&mut set).unwrap();
    let base = set.central.as_ref().unwrap().params.clone();
    let d = 0.01;
    for (l, sign) in set.learners.iter_mut().zip([1.0, -1.0]) {
        let shifted: Vec<f64> = l.flat_params().iter().map(|x| x + sign * d).collect();
        l.set_flat_params(&shifted).unwrap();
    }
    assert!(!arcg_step(&mut set, 9, 10).unwrap());
    assert!(arcg_step(&mut set, 10, 10).unwrap());
    let central = &set.central.as_ref().unwrap().params;
    for (c, b) in central.iter().zip(&base) {
        assert!((c - b).abs() < 1e-12);
    }
    for l in &set.learners {
        assert_eq!(&l.flat_params(), central);
    }
}

#[test]
fn single_model_central_tracks_the_model() {
    let mut set = model_set(1, 9, false);
    init_central(&mut set).unwrap();
    let shifted: Vec<f64> = set.learners[0].flat_params().iter().map(|x| x * 0.5).collect();
    set.learners[0].set_flat_params(&shifted).unwrap();
    arcg_step(&mut set, 10, 10).unwrap();
    assert_eq!(set.central.as_ref().unwrap().params, set.learners[0].flat_params());
}

#[test]
fn ensemble_follows_the_most_confident_critic() {
    let a = model_set(2, 10, false);
    let mut e = EnsemblePolicy::from_models(&a).unwrap();
    let n = e.critics[1].params.len();
    // make critic 1 a constant 5 and critic 0 a constant 1: last bias only
    for (c, v) in e.critics.iter_mut().zip([1.0, 5.0]) {
        c.params = ParamVector(vec![0.0; n]);
        let last = c.params.len() - 1;
        c.params[last] = v;
    }
    assert_eq!(e.arbiter(&[0.3, 0.3]), 1);
    let s = [0.2, 0.4];
    assert_eq!(e.actor_for_start(&s).mean_action(&s).unwrap(), e.actors[1].mean(&s).unwrap());

    // ties go to the lowest index
    e.critics[1] = e.critics[0].clone();
    assert_eq!(e.arbiter(&[0.3, 0.3]), 0);
    assert!(EnsemblePolicy::new(vec![e.actors[0].clone()], vec![e.critics[0].clone()]).is_err());
}

#[test]
fn identical_members_behave_like_one() {
    let a = model_set(1, 11, false);
    let l = &a.learners[0];
    let e = EnsemblePolicy::new(vec![l.actor.clone(); 3], vec![l.critic.clone(); 3]).unwrap();
    let s = [0.5, 0.1];
    assert_eq!(e.actor_for_start(&s).mean_action(&s).unwrap(), l.actor.mean(&s).unwrap());
}

#[test]
fn select_best_prefers_succeeding_model_and_lowest_index() {
    let env = PointEnv::point_maze_open();
    let mut set = model_set(2, 12, false);
    // model 1 pushes toward the upper right at full speed, model 0 stays put
    for (l, bias) in set.learners.iter_mut().zip([0.0, 10.0]) {
        l.actor.mean_params.iter_mut().for_each(|p| *p = 0.0);
        let n = l.actor.mean_params.len();
        l.actor.mean_params[n - 2] = bias;
        l.actor.mean_params[n - 1] = bias;
    }
    let rng = RandomStream::seed_from_u64(13);
    let (best, tables) = select_best(&set, &env, 10, false, &rng).unwrap();
    assert_eq!(best, 1);
    assert_eq!(tables.len(), 2);
    assert!(tables.iter().all(|t| t.len() == 6));

    set.learners[1] = set.learners[0].clone();
    let (best, _) = select_best(&set, &env, 10, false, &rng).unwrap();
    assert_eq!(best, 0);
}

fn run_train(set: &mut ModelSet, sched: &SwapSchedule, iterations: usize) -> TrainOutcome {
    let (curriculum, ppo) = tiny_configs();
    train(&PointEnv::point_maze(), set, sched, &curriculum, &ppo, &tiny_options(iterations), &mut NoObserver).unwrap()
}

#[test]
fn no_exchange_models_match_single_runs() {
    let env = PointEnv::point_maze();
    let mut pair = model_set(2, 14, false);
    let out = run_train(&mut pair, &schedule(Strategy::NoExchange, 20), 6);
    for i in 0..2 {
        let mut single = ModelSet::with_streams(
            &env,
            &tiny_network(),
            1e-3,
            vec![derive_stream(14, i as u64 + 1)],
            derive_stream(14, 0),
            false,
        )
        .unwrap();
        let single_out = run_train(&mut single, &schedule(Strategy::NoExchange, 20), 6);
        assert_eq!(single.learners[0], pair.learners[i]);
        assert_eq!(&single.pools.for_model(0), &pair.pools.for_model(i));
        let strip = |rows: &[crate::harness::MetricsRecord], id: usize| -> Vec<_> {
            rows.iter()
                .filter(|r| r.model_id == id)
                .map(|r| crate::harness::MetricsRecord { model_id: 0, ..r.clone() })
                .collect()
        };
        assert_eq!(strip(&single_out.metrics, 0), strip(&out.metrics, i));
    }
}

#[test]
fn swap_never_firing_equals_no_exchange() {
    let mut a = model_set(2, 15, false);
    let mut b = model_set(2, 15, false);
    let out_a = run_train(&mut a, &schedule(Strategy::SwapCritics, 7), 6);
    let out_b = run_train(&mut b, &schedule(Strategy::NoExchange, 7), 6);
    assert!(out_a.exchanges.is_empty());
    assert_eq!(out_a.metrics, out_b.metrics);
    assert_eq!(a.learners, b.learners);
}

#[test]
fn swaps_fire_on_multiples_of_k() {
    let mut set = model_set(2, 16, false);
    let (curriculum, ppo) = tiny_configs();
    // smallest workable sizes keep 100 iterations quick
    let ppo = PpoConfig {
        batch_size: 10,
        epochs_per_update: 1,
        ..ppo
    };
    let curriculum = CurriculumConfig {
        n_new: 2,
        n_old: 1,
        n_total: 11,
        rollouts_per_start: 1,
        ..curriculum
    };
    let options = TrainOptions {
        eval_every: 100,
        eval_episodes_per_band: 1,
        ..tiny_options(100)
    };
    let out = train(
        &PointEnv::point_maze(),
        &mut set,
        &schedule(Strategy::SwapCritics, 20),
        &curriculum,
        &ppo,
        &options,
        &mut NoObserver,
    )
    .unwrap();
    let at: Vec<usize> = out.exchanges.iter().map(|e| e.iteration).collect();
    assert_eq!(at, vec![20, 40, 60, 80, 100]);
    assert!(out.exchanges.iter().all(|e| e.plan.pairs == vec![(0, 1)]));
}

#[test]
fn serial_and_parallel_execution_agree() {
    let sched = schedule(Strategy::SwapCritics, 2);
    let (curriculum, ppo) = tiny_configs();
    let mut outs = Vec::new();
    for parallel in [false, true] {
        let mut set = model_set(4, 17, false);
        let options = TrainOptions {
            parallel,
            ..tiny_options(5)
        };
        let out = train(&PointEnv::point_maze(), &mut set, &sched, &curriculum, &ppo, &options, &mut NoObserver).unwrap();
        outs.push((set, out.metrics, out.exchanges));
    }
    assert_eq!(outs[0], outs[1]);
}

/// Between barriers a model's actor depends only on its own stream, pools
/// and (possibly received) critic: replaying model 1 alone from the state
/// it held right after a swap reproduces its actor at the next barrier.
#[test]
fn actors_are_isolated_between_barriers() {
    let env = PointEnv::point_maze();
    let (curriculum, ppo) = tiny_configs();
    let sched = schedule(Strategy::SwapCritics, 3);
    let mut set = model_set(2, 18, false);
    train(&env, &mut set, &sched, &curriculum, &ppo, &tiny_options(3), &mut NoObserver).unwrap();

    let mut solo = ModelSet {
        learners: vec![set.learners[1].clone()],
        pools: PoolLayout::PerModel(vec![set.pools.for_model(1).clone()]),
        rngs: vec![set.rngs[1].clone()],
        orchestration: set.orchestration.clone(),
        iteration: set.iteration,
        central: None,
    };
    train(&env, &mut set, &sched, &curriculum, &ppo, &tiny_options(5), &mut NoObserver).unwrap();
    train(&env, &mut solo, &schedule(Strategy::NoExchange, 3), &curriculum, &ppo, &tiny_options(5), &mut NoObserver).unwrap();
    assert_eq!(solo.learners[0].actor, set.learners[1].actor);
}

#[test]
fn common_pool_collects_every_models_survivors() {
    let mut set = model_set(2, 19, true);
    let out = run_train(&mut set, &schedule(Strategy::CommonPoolNoSwap, 20), 4);
    let pool = &set.pools.for_model(0).starts_old;
    assert_eq!(pool.len(), 1 + out.pool_additions.len());
    let models: BTreeSet<usize> = out.pool_additions.iter().map(|a| a.model_id).collect();
    assert!(models.iter().all(|m| *m < 2));
}

#[test]
fn mismatched_pool_layout_is_rejected() {
    let mut set = model_set(2, 20, false);
    let (curriculum, ppo) = tiny_configs();
    let err = train(
        &PointEnv::point_maze(),
        &mut set,
        &schedule(Strategy::CommonPoolNoSwap, 20),
        &curriculum,
        &ppo,
        &tiny_options(2),
        &mut NoObserver,
    )
    .unwrap_err();
    assert!(err.is_config());
}

#[test]
fn metrics_cover_every_iteration_and_eval_cell() {
    let mut set = model_set(2, 21, false);
    let out = run_train(&mut set, &schedule(Strategy::AsyncSync, 20), 10);
    let train_rows = out.metrics.iter().filter(|r| !r.is_eval()).count();
    let eval_rows = out.metrics.iter().filter(|r| r.is_eval()).count();
    assert_eq!(train_rows, 2 * 10);
    // evaluations at 5 and 10
    assert_eq!(eval_rows, 2 * 2 * 6);
    assert_eq!(out.final_eval.len(), 6);
    assert!(out.metrics.iter().all(|r| (0.0..=1.0).contains(&r.success_rate)));
    let syncs: Vec<usize> = out.exchanges.iter().map(|e| e.iteration).collect();
    assert_eq!(syncs, vec![10]);
    // after a sync every model holds the central parameters
    assert_eq!(set.learners[0].flat_params(), set.learners[1].flat_params());
}

#[test]
fn ensemble_strategy_returns_ensemble() {
    let mut set = model_set(2, 22, false);
    let out = run_train(&mut set, &schedule(Strategy::Ensemble, 20), 2);
    assert!(matches!(out.best, BestPolicy::Ensemble(_)));
    assert!(out.final_eval.iter().all(|r| r.model_id == 2));
}

#[test]
fn pools_only_grow_and_respect_bounds() {
    let mut set = model_set(2, 23, false);
    let out = run_train(&mut set, &schedule(Strategy::SwapInitPools, 2), 6);
    for a in &out.pool_additions {
        assert!(0.93 < a.r_hat && a.r_hat < 0.96);
    }
    let total: usize = (0..2).map(|i| set.pools.for_model(i).starts_old.len()).sum();
    assert_eq!(total, 2 + out.pool_additions.len());
}

#[test]
fn strategy_names_parse() {
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        assert_eq!(s.label().parse::<Strategy>().unwrap(), s);
    }
    assert!("nope".parse::<Strategy>().unwrap_err().is_config());
}
