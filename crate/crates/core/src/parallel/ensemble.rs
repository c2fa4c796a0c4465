use crate::envs::PointEnv;
use crate::error::{Error, Result};
use crate::harness::{evaluate, CellResult};
use crate::numerics::{Actor, Agent, GaussianPolicy, ValueFunction};
use crate::RandomStream;

use super::ModelSet;

/// Picks, per episode, the member whose critic values the start state most.
/// Ties go to the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePolicy {
    pub actors: Vec<GaussianPolicy>,
    pub critics: Vec<ValueFunction>,
}

impl EnsemblePolicy {
    pub fn new(actors: Vec<GaussianPolicy>, critics: Vec<ValueFunction>) -> Result<Self> {
        if actors.len() < 2 || actors.len() != critics.len() {
            return Err(Error::Config(format!(
                "an ensemble needs at least two actor-critic pairs, got {} actors and {} critics",
                actors.len(),
                critics.len()
            )));
        }
        Ok(Self { actors, critics })
    }

    pub fn from_models(models: &ModelSet) -> Result<Self> {
        Self::new(
            models.learners.iter().map(|l| l.actor.clone()).collect(),
            models.learners.iter().map(|l| l.critic.clone()).collect(),
        )
    }

    /// Index of the member chosen for an episode starting at `start`.
    pub fn arbiter(&self, start: &[f64]) -> usize {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for (i, c) in self.critics.iter().enumerate() {
            let v = c.value(start).unwrap_or(f64::NEG_INFINITY);
            if v > best_value {
                best = i;
                best_value = v;
            }
        }
        best
    }
}

impl Agent for EnsemblePolicy {
    fn actor_for_start(&self, start: &[f64]) -> &dyn Actor {
        &self.actors[self.arbiter(start)]
    }
}

/// Policy returned by training.
#[derive(Debug, Clone, PartialEq)]
pub enum BestPolicy {
    Single {
        index: usize,
        actor: GaussianPolicy,
        critic: ValueFunction,
    },
    Ensemble(EnsemblePolicy),
}

impl BestPolicy {
    /// Model id used for its evaluation rows; the ensemble gets one past the
    /// last member.
    pub fn model_id(&self) -> usize {
        match self {
            BestPolicy::Single { index, .. } => *index,
            BestPolicy::Ensemble(e) => e.actors.len(),
        }
    }
}

impl Agent for BestPolicy {
    fn actor_for_start(&self, start: &[f64]) -> &dyn Actor {
        match self {
            BestPolicy::Single { actor, .. } => actor,
            BestPolicy::Ensemble(e) => e.actor_for_start(start),
        }
    }
}

/// Evaluates every model on the six-cell grid with the same start draws and
/// returns the index with the highest mean success rate (lowest index on
/// ties) together with each model's table.
pub fn select_best(
    models: &ModelSet,
    env: &PointEnv,
    episodes_per_band: usize,
    stochastic: bool,
    eval_rng: &RandomStream,
) -> Result<(usize, Vec<Vec<CellResult>>)> {
    let tables = models
        .learners
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut rng = eval_rng.clone();
            evaluate(&l.actor, env, episodes_per_band, stochastic, &mut rng).map_err(|e| e.in_model(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, table) in tables.iter().enumerate() {
        let score = table.iter().map(|c| c.success_rate).sum::<f64>() / table.len() as f64;
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Ok((best, tables))
}
