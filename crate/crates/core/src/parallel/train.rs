use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{PointEnv, State};
use crate::error::{Error, Result};
use crate::harness::{coverage_entropy, evaluate, CellResult, MetricsRecord};
use crate::ppo::{ppo_update, ActorCritic, PpoConfig, PpoStats};
use crate::rcg::{apply_survivors, curriculum_iteration, CurriculumConfig, CurriculumPools};
use crate::{derive_stream, RandomStream};

use super::{
    arcg_step, init_central, make_pairing, select_best, swap_critics, swap_pools, BestPolicy, EnsemblePolicy,
    ModelSet, PairingPlan, PoolLayout, Strategy, SwapSchedule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub total_iterations: usize,
    pub eval_every: usize,
    pub eval_episodes_per_band: usize,
    /// Evaluate with sampled actions instead of the mean action.
    pub stochastic_eval: bool,
    /// Grid cells per dimension for the pool coverage metric.
    pub coverage_resolution: usize,
    pub run_id: String,
    /// Seed of the evaluation streams; every model sees the same draws.
    pub eval_seed: u64,
    /// Run the per-model phases on the rayon pool. Results do not depend on
    /// this.
    pub parallel: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            total_iterations: 200,
            eval_every: 10,
            eval_episodes_per_band: 50,
            stochastic_eval: false,
            coverage_resolution: 20,
            run_id: "run".into(),
            eval_seed: 0,
            parallel: true,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.total_iterations == 0 || self.eval_every == 0 || self.eval_episodes_per_band == 0 {
            return Err(Error::Config(
                "total_iterations, eval_every and eval_episodes_per_band must be positive".into(),
            ));
        }
        if self.coverage_resolution < 2 {
            return Err(Error::Config("coverage_resolution must be at least 2".into()));
        }
        Ok(())
    }
}

/// A state admitted to a good-starts pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolAddition {
    /// Model whose filter admitted the state.
    pub model_id: usize,
    pub iteration: usize,
    pub r_hat: f64,
    pub state: State,
}

/// Cross-model exchange performed at a barrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeEvent {
    pub iteration: usize,
    pub strategy: Strategy,
    /// Empty for parameter syncs, which involve every model.
    pub plan: PairingPlan,
}

/// Everything recorded for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    /// Training rows, then evaluation rows when this iteration evaluates.
    pub metrics: Vec<MetricsRecord>,
    pub pool_additions: Vec<PoolAddition>,
    pub exchange: Option<ExchangeEvent>,
    /// Models whose update was rolled back, with the reason.
    pub aborted_updates: Vec<(usize, String)>,
}

/// Called at the end of every iteration, after the barrier.
pub trait TrainObserver {
    fn iteration_done(&mut self, models: &ModelSet, report: &IterationReport) -> Result<()>;
}

pub struct NoObserver;

impl TrainObserver for NoObserver {
    fn iteration_done(&mut self, _models: &ModelSet, _report: &IterationReport) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRecord>,
    pub pool_additions: Vec<PoolAddition>,
    pub exchanges: Vec<ExchangeEvent>,
    pub best: BestPolicy,
    /// Six rows for `best`.
    pub final_eval: Vec<MetricsRecord>,
}

struct ModelStep {
    batch_success: f64,
    batch_mean_return: f64,
    stats: PpoStats,
    next_starts: Vec<State>,
    survivors: Vec<(State, f64)>,
}

fn model_phase(
    env: &PointEnv,
    learner: &mut ActorCritic,
    rng: &mut RandomStream,
    pools: &CurriculumPools,
    curriculum: &CurriculumConfig,
    ppo: &PpoConfig,
) -> Result<ModelStep> {
    let mut env = env.clone();
    let gamma = env.spec().gamma;
    let step = curriculum_iteration(
        &mut env,
        &learner.actor,
        &learner.critic,
        pools,
        curriculum,
        ppo.batch_size,
        rng,
    )?;
    let stats = ppo_update(learner, &step.batch, ppo, gamma, rng)?;
    Ok(ModelStep {
        batch_success: step.batch.success_rate(),
        batch_mean_return: step.batch.mean_return(gamma),
        stats,
        next_starts: step.outcome.next_starts,
        survivors: step.outcome.survivors,
    })
}

/// Runs iterations `models.iteration + 1 ..= options.total_iterations`.
pub fn train(
    env: &PointEnv,
    models: &mut ModelSet,
    schedule: &SwapSchedule,
    curriculum: &CurriculumConfig,
    ppo: &PpoConfig,
    options: &TrainOptions,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    let m = models.len();
    schedule.validate(m)?;
    curriculum.validate(env.spec().action_dim)?;
    ppo.validate()?;
    options.validate()?;
    let common = matches!(models.pools, PoolLayout::Common(_));
    if common != schedule.strategy.uses_common_pool() {
        return Err(Error::Config(format!(
            "strategy {} does not match the model set's pool layout",
            schedule.strategy
        )));
    }
    if schedule.strategy == Strategy::AsyncSync && models.central.is_none() {
        init_central(models)?;
    }

    let mut metrics = Vec::new();
    let mut pool_additions = Vec::new();
    let mut exchanges = Vec::new();

    for iteration in models.iteration + 1..=options.total_iterations {
        // Phases 1 and 2: independent per-model work.
        let steps: Vec<Result<ModelStep>> = {
            let ModelSet {
                learners, rngs, pools, ..
            } = &mut *models;
            let pools = &*pools;
            if options.parallel {
                learners
                    .par_iter_mut()
                    .zip(rngs.par_iter_mut())
                    .enumerate()
                    .map(|(i, (l, r))| model_phase(env, l, r, pools.for_model(i), curriculum, ppo))
                    .collect()
            } else {
                learners
                    .iter_mut()
                    .zip(rngs.iter_mut())
                    .enumerate()
                    .map(|(i, (l, r))| model_phase(env, l, r, pools.for_model(i), curriculum, ppo))
                    .collect()
            }
        };
        let steps = steps
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.map_err(|e| e.in_model(i)))
            .collect::<Result<Vec<_>>>()?;

        // Phase 3: barrier.
        let mut additions = Vec::new();
        for (i, s) in steps.iter().enumerate() {
            additions.extend(s.survivors.iter().map(|(state, r_hat)| PoolAddition {
                model_id: i,
                iteration,
                r_hat: *r_hat,
                state: state.clone(),
            }));
        }
        match &mut models.pools {
            PoolLayout::PerModel(pools) => {
                for (p, s) in pools.iter_mut().zip(&steps) {
                    apply_survivors(p, s.next_starts.clone(), &s.survivors, iteration, curriculum);
                }
            }
            PoolLayout::Common(p) => {
                let next: Vec<State> = steps.iter().flat_map(|s| s.next_starts.iter().cloned()).collect();
                let survivors: Vec<(State, f64)> = steps.iter().flat_map(|s| s.survivors.iter().cloned()).collect();
                apply_survivors(p, next, &survivors, iteration, curriculum);
            }
        }

        let exchange = exchange_at(models, schedule, iteration)?;
        models.iteration = iteration;

        let mut rows = Vec::with_capacity(m * 7);
        for (i, s) in steps.iter().enumerate() {
            let pool = &models.pools.for_model(i).starts_old;
            let geometry = env.geometry();
            rows.push(MetricsRecord {
                run_id: options.run_id.clone(),
                model_id: i,
                iteration,
                band: None,
                pose_mode: None,
                success_rate: s.batch_success,
                mean_discounted_return: s.batch_mean_return,
                pool_size: pool.len(),
                coverage_entropy: coverage_entropy(pool, &geometry.lower, &geometry.upper, options.coverage_resolution),
                actor_loss: Some(s.stats.actor_loss),
                critic_loss: Some(s.stats.critic_loss),
                clip_fraction: Some(s.stats.clip_fraction),
            });
        }
        if iteration % options.eval_every == 0 || iteration == options.total_iterations {
            let eval_rng = derive_stream(options.eval_seed, iteration as u64);
            for (i, learner) in models.learners.iter().enumerate() {
                let mut rng = eval_rng.clone();
                let table = evaluate(&learner.actor, env, options.eval_episodes_per_band, options.stochastic_eval, &mut rng)
                    .map_err(|e| e.in_model(i))?;
                let pool = &models.pools.for_model(i).starts_old;
                rows.extend(eval_rows(&table, options, i, iteration, env, pool));
            }
        }

        let report = IterationReport {
            iteration,
            metrics: rows,
            pool_additions: additions,
            exchange,
            aborted_updates: steps
                .iter()
                .enumerate()
                .filter_map(|(i, s)| s.stats.aborted.clone().map(|r| (i, r)))
                .collect(),
        };
        observer.iteration_done(models, &report)?;
        metrics.extend(report.metrics);
        pool_additions.extend(report.pool_additions);
        exchanges.extend(report.exchange);
    }

    // Stream 0 is never used by an iteration.
    let final_rng = derive_stream(options.eval_seed, 0);
    let (best, table) = if schedule.strategy == Strategy::Ensemble {
        let ensemble = EnsemblePolicy::from_models(models)?;
        let table = evaluate(
            &ensemble,
            env,
            options.eval_episodes_per_band,
            options.stochastic_eval,
            &mut final_rng.clone(),
        )?;
        (BestPolicy::Ensemble(ensemble), table)
    } else {
        let (index, mut tables) = select_best(
            models,
            env,
            options.eval_episodes_per_band,
            options.stochastic_eval,
            &final_rng,
        )?;
        let learner = &models.learners[index];
        (
            BestPolicy::Single {
                index,
                actor: learner.actor.clone(),
                critic: learner.critic.clone(),
            },
            tables.swap_remove(index),
        )
    };
    let id = best.model_id();
    let pool = &models.pools.for_model(id.min(m - 1)).starts_old;
    let final_eval = eval_rows(&table, options, id, models.iteration, env, pool);

    Ok(TrainOutcome {
        metrics,
        pool_additions,
        exchanges,
        best,
        final_eval,
    })
}

fn exchange_at(models: &mut ModelSet, schedule: &SwapSchedule, iteration: usize) -> Result<Option<ExchangeEvent>> {
    let strategy = schedule.strategy;
    let event = |plan| {
        Some(ExchangeEvent {
            iteration,
            strategy,
            plan,
        })
    };
    match strategy {
        Strategy::SwapCritics | Strategy::CommonPoolSwapCritics if iteration % schedule.k == 0 => {
            let plan = make_pairing(models.len(), &mut models.orchestration)?;
            swap_critics(models, &plan)?;
            Ok(event(plan))
        }
        Strategy::SwapInitPools if iteration % schedule.k == 0 => {
            let plan = make_pairing(models.len(), &mut models.orchestration)?;
            swap_pools(models, &plan)?;
            Ok(event(plan))
        }
        Strategy::AsyncSync => {
            if arcg_step(models, iteration, schedule.async_sync_period)? {
                Ok(event(PairingPlan { pairs: Vec::new() }))
            } else {
                Ok(None)
            }
        }
        _ => Ok(None),
    }
}

fn eval_rows(
    table: &[CellResult],
    options: &TrainOptions,
    model_id: usize,
    iteration: usize,
    env: &PointEnv,
    pool: &crate::rcg::StartPool,
) -> Vec<MetricsRecord> {
    let g = env.geometry();
    let coverage = coverage_entropy(pool, &g.lower, &g.upper, options.coverage_resolution);
    table
        .iter()
        .map(|c| MetricsRecord {
            run_id: options.run_id.clone(),
            model_id,
            iteration,
            band: Some(c.cell.band),
            pose_mode: Some(c.cell.pose_mode),
            success_rate: c.success_rate,
            mean_discounted_return: c.mean_discounted_return,
            pool_size: pool.len(),
            coverage_entropy: coverage,
            actor_loss: None,
            critic_loss: None,
            clip_fraction: None,
        })
        .collect()
}
