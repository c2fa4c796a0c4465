//! Several actor-critic learners trained in lockstep, with cross-model
//! exchange at synchronization barriers.
//!
//! Each training iteration has two per-model phases that never look at other
//! models (curriculum iteration with rollouts, then the PPO update) followed
//! by a barrier where all cross-model data movement happens: shared-pool
//! writes, critic or pool swaps, and parameter synchronization.

mod ensemble;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envs::PointEnv;
use crate::error::{Error, Result};
use crate::ppo::{ActorCritic, NetworkConfig};
use crate::rcg::CurriculumPools;
use crate::{derive_stream, RandomStream};

pub use ensemble::{select_best, BestPolicy, EnsemblePolicy};
pub use train::{
    train, ExchangeEvent, IterationReport, NoObserver, PoolAddition, TrainObserver, TrainOptions, TrainOutcome,
};

/// How the models of a set interact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Swap critics between random pairs every `k` iterations (PRCG).
    SwapCritics,
    /// Swap both start pools between random pairs every `k` iterations.
    SwapInitPools,
    /// One shared pool, critics swapped every `k` iterations.
    CommonPoolSwapCritics,
    /// One shared pool, no other exchange.
    CommonPoolNoSwap,
    /// Independent learners.
    NoExchange,
    /// Local learners periodically merged into a central parameter copy.
    AsyncSync,
    /// Independent learners combined at the end by a critic arbiter.
    Ensemble,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::SwapCritics,
        Strategy::SwapInitPools,
        Strategy::CommonPoolSwapCritics,
        Strategy::CommonPoolNoSwap,
        Strategy::NoExchange,
        Strategy::AsyncSync,
        Strategy::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SwapCritics => "swap-critics",
            Strategy::SwapInitPools => "swap-init-pools",
            Strategy::CommonPoolSwapCritics => "common-pool-swap-critics",
            Strategy::CommonPoolNoSwap => "common-pool-no-swap",
            Strategy::NoExchange => "no-exchange",
            Strategy::AsyncSync => "async-sync",
            Strategy::Ensemble => "ensemble",
        }
    }

    /// Short algorithm label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::SwapCritics => "PRCG",
            Strategy::SwapInitPools => "PRCG-i",
            Strategy::CommonPoolSwapCritics => "PRCG-ci",
            Strategy::CommonPoolNoSwap => "RCG-ci",
            Strategy::NoExchange => "RCG",
            Strategy::AsyncSync => "ARCG",
            Strategy::Ensemble => "Ensemble",
        }
    }

    pub fn swaps_critics(self) -> bool {
        matches!(self, Strategy::SwapCritics | Strategy::CommonPoolSwapCritics)
    }

    pub fn uses_common_pool(self) -> bool {
        matches!(self, Strategy::CommonPoolSwapCritics | Strategy::CommonPoolNoSwap)
    }

    /// Strategies that pair models up and therefore need an even count.
    pub fn needs_pairs(self) -> bool {
        matches!(
            self,
            Strategy::SwapCritics | Strategy::SwapInitPools | Strategy::CommonPoolSwapCritics
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == lower || st.label().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwapSchedule {
    pub strategy: Strategy,
    /// Iterations between exchange barriers.
    pub k: usize,
    pub async_sync_period: usize,
}

impl Default for SwapSchedule {
    fn default() -> Self {
        Self {
            strategy: Strategy::SwapCritics,
            k: 20,
            async_sync_period: 10,
        }
    }
}

impl SwapSchedule {
    pub fn validate(&self, models: usize) -> Result<()> {
        if self.k == 0 || self.async_sync_period == 0 {
            return Err(Error::Config("k and async_sync_period must be at least 1".into()));
        }
        if models == 0 {
            return Err(Error::Config("need at least one model".into()));
        }
        if self.strategy.needs_pairs() && models % 2 != 0 {
            return Err(Error::Config(format!(
                "{} pairs models up and needs an even model count, got {models}",
                self.strategy
            )));
        }
        if self.strategy == Strategy::Ensemble && models < 2 {
            return Err(Error::Config("an ensemble needs at least two models".into()));
        }
        Ok(())
    }
}

/// A perfect matching of model indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairingPlan {
    pub pairs: Vec<(usize, usize)>,
}

impl PairingPlan {
    pub fn validate(&self, models: usize) -> Result<()> {
        let mut seen = vec![false; models];
        for &(i, j) in &self.pairs {
            for x in [i, j] {
                if x >= models || seen[x] {
                    return Err(Error::Usage(format!("pairing {:?} is not a perfect matching of {models}", self.pairs)));
                }
                seen[x] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Usage(format!("pairing {:?} leaves models unpaired", self.pairs)));
        }
        Ok(())
    }
}

impl fmt::Display for PairingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs.iter().map(|(i, j)| format!("{i}-{j}")).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Uniform random perfect matching on `0..models`: shuffle, then pair
/// neighbours. Each pair is stored with the smaller index first.
pub fn make_pairing(models: usize, rng: &mut RandomStream) -> Result<PairingPlan> {
    if models == 0 || models % 2 != 0 {
        return Err(Error::Config(format!("pairing needs an even positive model count, got {models}")));
    }
    let mut order: Vec<usize> = (0..models).collect();
    order.shuffle(rng);
    let mut pairs: Vec<(usize, usize)> = order
        .chunks(2)
        .map(|c| (c[0].min(c[1]), c[0].max(c[1])))
        .collect();
    pairs.sort_unstable();
    Ok(PairingPlan { pairs })
}

/// Start pools of a model set.
#[derive(Debug, Clone, PartialEq)]
pub enum PoolLayout {
    PerModel(Vec<CurriculumPools>),
    Common(CurriculumPools),
}

impl PoolLayout {
    /// Pools model `i` reads from.
    pub fn for_model(&self, i: usize) -> &CurriculumPools {
        match self {
            PoolLayout::PerModel(p) => &p[i],
            PoolLayout::Common(p) => p,
        }
    }
}

/// Central copy kept by the asynchronous-sync strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralParams {
    pub params: Vec<f64>,
    /// Each model's flat parameters right after its last sync.
    pub last_synced: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub learners: Vec<ActorCritic>,
    pub pools: PoolLayout,
    /// One private stream per model.
    pub rngs: Vec<RandomStream>,
    /// Stream for barrier decisions such as pairings.
    pub orchestration: RandomStream,
    /// Completed training iterations.
    pub iteration: usize,
    pub central: Option<CentralParams>,
}

impl ModelSet {
    /// `models` fresh learners. Model `i` draws from stream `i + 1` of
    /// `master_seed`; barrier decisions use stream 0.
    pub fn new(
        env: &PointEnv,
        network: &NetworkConfig,
        learning_rate: f64,
        models: usize,
        master_seed: u64,
        common_pool: bool,
    ) -> Result<Self> {
        let rngs = (0..models as u64).map(|i| derive_stream(master_seed, i + 1)).collect();
        Self::with_streams(env, network, learning_rate, rngs, derive_stream(master_seed, 0), common_pool)
    }

    /// Learners initialised from, and then owning, the given streams.
    pub fn with_streams(
        env: &PointEnv,
        network: &NetworkConfig,
        learning_rate: f64,
        mut rngs: Vec<RandomStream>,
        orchestration: RandomStream,
        common_pool: bool,
    ) -> Result<Self> {
        if rngs.is_empty() {
            return Err(Error::Config("need at least one model".into()));
        }
        let learners = rngs
            .iter_mut()
            .enumerate()
            .map(|(i, rng)| ActorCritic::initialize(env.spec(), network, learning_rate, rng).map_err(|e| e.in_model(i)))
            .collect::<Result<Vec<_>>>()?;
        let goals = &env.spec().goal_states;
        let pools = if common_pool {
            PoolLayout::Common(CurriculumPools::from_goals(goals))
        } else {
            PoolLayout::PerModel(vec![CurriculumPools::from_goals(goals); learners.len()])
        };
        Ok(Self {
            learners,
            pools,
            rngs,
            orchestration,
            iteration: 0,
            central: None,
        })
    }

    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }
}

/// Exchanges critics, with their optimizer state, within each pair.
pub fn swap_critics(models: &mut ModelSet, plan: &PairingPlan) -> Result<()> {
    plan.validate(models.len())?;
    for &(i, j) in &plan.pairs {
        let (a, b) = pair_mut(&mut models.learners, i, j);
        std::mem::swap(&mut a.critic, &mut b.critic);
        std::mem::swap(&mut a.critic_opt, &mut b.critic_opt);
    }
    Ok(())
}

/// Exchanges both start pools within each pair. Needs per-model pools.
pub fn swap_pools(models: &mut ModelSet, plan: &PairingPlan) -> Result<()> {
    plan.validate(models.len())?;
    let PoolLayout::PerModel(pools) = &mut models.pools else {
        return Err(Error::Usage("cannot swap a common pool".into()));
    };
    for &(i, j) in &plan.pairs {
        let (a, b) = pair_mut(pools, i, j);
        std::mem::swap(a, b);
    }
    Ok(())
}

fn pair_mut<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert_ne!(i, j);
    if i < j {
        let (lo, hi) = v.split_at_mut(j);
        (&mut lo[i], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(i);
        (&mut hi[0], &mut lo[j])
    }
}

/// Makes every local model equal to model 0 and starts tracking deltas.
pub fn init_central(models: &mut ModelSet) -> Result<()> {
    let params = models.learners[0].flat_params();
    for l in &mut models.learners[1..] {
        l.set_flat_params(&params)?;
    }
    models.central = Some(CentralParams {
        last_synced: vec![params.clone(); models.len()],
        params,
    });
    Ok(())
}

/// Asynchronous-sync barrier: the central copy absorbs every model's change
/// since its last sync, then overwrites all local models. Returns whether a
/// sync happened at `iteration`.
pub fn arcg_step(models: &mut ModelSet, iteration: usize, period: usize) -> Result<bool> {
    if period == 0 || iteration % period != 0 {
        return Ok(false);
    }
    if models.central.is_none() {
        init_central(models)?;
    }
    let central = models.central.as_mut().expect("initialised above");
    for (learner, last) in models.learners.iter().zip(&central.last_synced) {
        let local = learner.flat_params();
        for ((c, l), s) in central.params.iter_mut().zip(&local).zip(last) {
            *c += l - s;
        }
    }
    for (learner, last) in models.learners.iter_mut().zip(central.last_synced.iter_mut()) {
        learner.set_flat_params(&central.params)?;
        // set_flat_params clamps log_std, so read back what was stored
        *last = learner.flat_params();
    }
    Ok(true)
}

#[cfg(test)]
mod tests;
