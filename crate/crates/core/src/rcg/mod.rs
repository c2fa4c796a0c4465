//! Reverse curriculum: start-state expansion, return filtering and the
//! good-starts pool.
//!
//! One curriculum iteration for a learner:
//!
//! 1. expand the current seed starts with random-action episodes
//!    ([`sample_nearby`]) and keep `n_new` of the visited states;
//! 2. add `n_old` uniform draws from the archive of earlier good starts;
//! 3. train on episodes started uniformly from that list;
//! 4. estimate the discounted return of every distinct start and keep those
//!    strictly inside `(r_min, r_max)`;
//! 5. the survivors become the next seeds and are appended to the archive.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::envs::{PointEnv, State};
use crate::error::{Error, Result};
use crate::numerics::{Actor, GaussianPolicy, ValueFunction};
use crate::ppo::{collect_rollouts, RolloutBatch};
use crate::RandomStream;

/// How the return of a candidate start is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReturnEstimator {
    /// Mean discounted return of fresh policy rollouts.
    #[default]
    MonteCarlo,
    /// As `MonteCarlo`, plus γᵀ·V(s_T) added to rollouts cut off by the
    /// horizon. Estimates are not confined to `[0, 1]`.
    CriticBootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub n_new: usize,
    pub n_old: usize,
    pub n_total: usize,
    /// Expansion noise std per action dimension; one value is broadcast.
    pub sigma: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub rollouts_per_start: usize,
    pub estimator: ReturnEstimator,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            n_new: 200,
            n_old: 100,
            n_total: 1000,
            sigma: vec![0.02],
            r_min: 0.93,
            r_max: 0.96,
            rollouts_per_start: 24,
            estimator: ReturnEstimator::MonteCarlo,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self, action_dim: usize) -> Result<()> {
        if !(0.0 < self.r_min && self.r_min < self.r_max && self.r_max <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 < r_min < r_max <= 1, got r_min={} r_max={}",
                self.r_min, self.r_max
            )));
        }
        if self.n_new == 0 || self.n_old == 0 || self.rollouts_per_start == 0 {
            return Err(Error::Config("n_new, n_old and rollouts_per_start must be positive".into()));
        }
        if self.n_total < self.n_new {
            return Err(Error::Config("n_total must be at least n_new".into()));
        }
        if self.sigma.len() != 1 && self.sigma.len() != action_dim {
            return Err(Error::Config(format!(
                "sigma needs 1 or {action_dim} entries, got {}",
                self.sigma.len()
            )));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("sigma entries must be positive".into()));
        }
        Ok(())
    }

    pub fn sigma_for(&self, action_dim: usize) -> Vec<f64> {
        if self.sigma.len() == 1 {
            vec![self.sigma[0]; action_dim]
        } else {
            self.sigma.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub state: State,
    pub added_at_iteration: usize,
    /// Return estimate that admitted the state; `None` for goal seeds.
    pub r_hat: Option<f64>,
}

/// Append-only list of feasible start states.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StartPool {
    entries: Vec<PoolEntry>,
}

impl StartPool {
    pub fn from_goals(goals: &[State]) -> Self {
        Self {
            entries: goals
                .iter()
                .map(|g| PoolEntry {
                    state: g.clone(),
                    added_at_iteration: 0,
                    r_hat: None,
                })
                .collect(),
        }
    }

    pub fn from_states(states: Vec<State>, iteration: usize) -> Self {
        Self {
            entries: states
                .into_iter()
                .map(|state| PoolEntry {
                    state,
                    added_at_iteration: iteration,
                    r_hat: None,
                })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn states(&self) -> Vec<State> {
        self.entries.iter().map(|e| e.state.clone()).collect()
    }

    pub fn push(&mut self, entry: PoolEntry) {
        if let Some(last) = self.entries.last() {
            assert!(
                entry.added_at_iteration >= last.added_at_iteration,
                "pool entries must be appended in iteration order"
            );
        }
        self.entries.push(entry);
    }

    /// `n` uniform draws with replacement.
    pub fn sample(&self, n: usize, rng: &mut RandomStream) -> Vec<State> {
        if self.entries.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| self.entries[rng.random_range(0..self.entries.len())].state.clone())
            .collect()
    }
}

/// The current seeds (`starts`) and the archive of good starts (`starts_old`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPools {
    pub starts: StartPool,
    pub starts_old: StartPool,
}

impl CurriculumPools {
    pub fn from_goals(goals: &[State]) -> Self {
        Self {
            starts: StartPool::from_goals(goals),
            starts_old: StartPool::from_goals(goals),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub start: State,
    pub r_hat: f64,
    pub successes: usize,
    pub rollouts: usize,
}

/// Brownian expansion in action space.
///
/// Until the buffer (initially `seeds`) holds `n_total` states: draw a state
/// uniformly from the buffer, run `t_max` steps of zero-mean Gaussian actions
/// with std `sigma` from it, and append every visited state. Returns `n_new`
/// buffer states drawn without replacement.
///
/// The random episodes run for the full horizon even when they pass through
/// the goal region; otherwise expansion from a goal seed would stop after one
/// step.
pub fn sample_nearby(
    env: &PointEnv,
    seeds: &[State],
    n_total: usize,
    sigma: &[f64],
    n_new: usize,
    rng: &mut RandomStream,
) -> Result<Vec<State>> {
    if seeds.is_empty() {
        return Err(Error::Usage("sample_nearby needs at least one seed state".into()));
    }
    if let Some(bad) = seeds.iter().find(|s| !env.is_feasible(s)) {
        return Err(Error::Reset(format!("seed state {bad:?} is not feasible")));
    }
    if sigma.len() != env.spec().action_dim {
        return Err(Error::Dimension {
            context: "expansion sigma",
            expected: env.spec().action_dim,
            actual: sigma.len(),
        });
    }
    let noise: Vec<Normal<f64>> = sigma
        .iter()
        .map(|s| Normal::new(0.0, *s).map_err(|e| Error::Config(format!("bad sigma {s}: {e}"))))
        .collect::<Result<_>>()?;

    let t_max = env.spec().t_max;
    let mut buffer: Vec<State> = seeds.to_vec();
    let mut action = vec![0.0; sigma.len()];
    while buffer.len() < n_total {
        let mut s = buffer[rng.random_range(0..buffer.len())].clone();
        for _ in 0..t_max {
            for (a, n) in action.iter_mut().zip(&noise) {
                *a = n.sample(rng);
            }
            s = env.transition(&s, &action);
            buffer.push(s.clone());
        }
    }

    if n_new <= buffer.len() {
        Ok(index::sample(rng, buffer.len(), n_new)
            .into_iter()
            .map(|i| buffer[i].clone())
            .collect())
    } else {
        Ok((0..n_new)
            .map(|_| buffer[rng.random_range(0..buffer.len())].clone())
            .collect())
    }
}

/// Mean discounted return Σ γᵗ r_t of `rollouts` episodes from `s0`, where
/// r_t is the reward of the (t+1)-th step.
pub fn estimate_return(
    env: &mut PointEnv,
    actor: &dyn Actor,
    s0: &[f64],
    rollouts: usize,
    bootstrap: Option<&ValueFunction>,
    rng: &mut RandomStream,
) -> Result<ReturnEstimate> {
    let gamma = env.spec().gamma;
    let mut total = 0.0;
    let mut successes = 0;
    for _ in 0..rollouts {
        env.reset_to(s0)?;
        let mut state = s0.to_vec();
        let mut t = 0i32;
        loop {
            let (action, _) = actor.sample_action(&state, rng)?;
            let step = env.step(&action)?;
            if step.reward > 0.0 {
                total += gamma.powi(t) * step.reward;
                successes += 1;
            }
            t += 1;
            if step.done {
                if step.reward == 0.0 {
                    if let Some(critic) = bootstrap {
                        total += gamma.powi(t) * critic.value(&step.next_state)?;
                    }
                }
                break;
            }
            state = step.next_state;
        }
    }
    Ok(ReturnEstimate {
        start: s0.to_vec(),
        r_hat: total / rollouts as f64,
        successes,
        rollouts,
    })
}

/// Starts whose estimate lies strictly inside `(r_min, r_max)`.
pub fn select_good_starts(estimates: &[ReturnEstimate], r_min: f64, r_max: f64) -> Vec<State> {
    estimates
        .iter()
        .filter(|e| r_min < e.r_hat && e.r_hat < r_max)
        .map(|e| e.start.clone())
        .collect()
}

/// Exact-coordinate key used to collapse duplicate starts.
fn state_key(s: &[f64]) -> Vec<u64> {
    s.iter().map(|v| v.to_bits()).collect()
}

/// Distinct states of `list`, in first-occurrence order.
pub fn distinct_states(list: &[State]) -> Vec<State> {
    let mut seen: HashMap<Vec<u64>, ()> = HashMap::with_capacity(list.len());
    list.iter()
        .filter(|s| seen.insert(state_key(s), ()).is_none())
        .cloned()
        .collect()
}

/// `sample_nearby` on the current seeds plus `n_old` draws from the archive.
pub fn build_start_list(
    env: &PointEnv,
    pools: &CurriculumPools,
    config: &CurriculumConfig,
    rng: &mut RandomStream,
) -> Result<Vec<State>> {
    let sigma = config.sigma_for(env.spec().action_dim);
    let mut list = sample_nearby(env, &pools.starts.states(), config.n_total, &sigma, config.n_new, rng)?;
    list.extend(pools.starts_old.sample(config.n_old, rng));
    Ok(list)
}

/// Result of filtering one iteration's start list.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// One estimate per distinct start.
    pub estimates: Vec<ReturnEstimate>,
    /// Good starts with the estimate that admitted them.
    pub survivors: Vec<(State, f64)>,
    /// Seeds for the next iteration: the survivors, or archive redraws when
    /// nothing survived.
    pub next_starts: Vec<State>,
    pub fell_back: bool,
}

/// Estimates every distinct start once and keeps the good ones. Starts
/// already inside the goal region never survive.
pub fn filter_start_list(
    env: &mut PointEnv,
    actor: &dyn Actor,
    critic: Option<&ValueFunction>,
    start_list: &[State],
    archive: &StartPool,
    config: &CurriculumConfig,
    rng: &mut RandomStream,
) -> Result<FilterOutcome> {
    let bootstrap = match config.estimator {
        ReturnEstimator::MonteCarlo => None,
        ReturnEstimator::CriticBootstrap => critic,
    };
    let estimates = distinct_states(start_list)
        .iter()
        .map(|s| estimate_return(env, actor, s, config.rollouts_per_start, bootstrap, rng))
        .collect::<Result<Vec<_>>>()?;
    let survivors: Vec<(State, f64)> = estimates
        .iter()
        .filter(|e| config.r_min < e.r_hat && e.r_hat < config.r_max && !env.in_goal(&e.start))
        .map(|e| (e.start.clone(), e.r_hat))
        .collect();
    let fell_back = survivors.is_empty();
    let next_starts = if fell_back {
        archive.sample(config.n_old, rng)
    } else {
        survivors.iter().map(|(s, _)| s.clone()).collect()
    };
    Ok(FilterOutcome {
        estimates,
        survivors,
        next_starts,
        fell_back,
    })
}

/// Replaces the seeds and appends survivors to the archive, tagged with
/// `iteration`.
pub fn apply_survivors(
    pools: &mut CurriculumPools,
    next_starts: Vec<State>,
    survivors: &[(State, f64)],
    iteration: usize,
    config: &CurriculumConfig,
) {
    pools.starts = StartPool::from_states(next_starts, iteration);
    for (state, r_hat) in survivors {
        assert!(
            config.r_min < *r_hat && *r_hat < config.r_max,
            "pool admission outside ({}, {}): {r_hat}",
            config.r_min,
            config.r_max
        );
        pools.starts_old.push(PoolEntry {
            state: state.clone(),
            added_at_iteration: iteration,
            r_hat: Some(*r_hat),
        });
    }
}

/// Everything one curriculum iteration produced for a learner.
#[derive(Debug, Clone)]
pub struct CurriculumStep {
    pub start_list: Vec<State>,
    pub batch: RolloutBatch,
    pub outcome: FilterOutcome,
}

/// One full curriculum iteration against a read-only pool snapshot: build
/// the start list, collect training rollouts from it, then filter it with the
/// pre-update policy. Pool writes are left to the caller
/// ([`apply_survivors`]) so shared pools can be updated at a barrier.
#[allow(clippy::too_many_arguments)]
pub fn curriculum_iteration(
    env: &mut PointEnv,
    actor: &GaussianPolicy,
    critic: &ValueFunction,
    pools: &CurriculumPools,
    config: &CurriculumConfig,
    batch_size: usize,
    rng: &mut RandomStream,
) -> Result<CurriculumStep> {
    let start_list = build_start_list(env, pools, config, rng)?;
    let batch = collect_rollouts(env, actor, critic, &start_list, batch_size, rng)?;
    let outcome = filter_start_list(env, actor, Some(critic), &start_list, &pools.starts_old, config, rng)?;
    Ok(CurriculumStep {
        start_list,
        batch,
        outcome,
    })
}

#[cfg(test)]
mod tests;
