use std::collections::BTreeMap;

use rand::SeedableRng;

use crate::envs::{EvalBand, PointEnv};
use crate::error::Result;
use crate::numerics::Agent;
use crate::rcg::StartPool;
use crate::RandomStream;

/// Outcome of one evaluation cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: EvalBand,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_discounted_return: f64,
}

/// Runs `episodes_per_band` episodes in each of the six cells, in
/// [`EvalBand::ALL`] order, on a clone of `env`. Actions are the policy mean
/// unless `stochastic` is set.
pub fn evaluate(
    agent: &dyn Agent,
    env: &PointEnv,
    episodes_per_band: usize,
    stochastic: bool,
    rng: &mut RandomStream,
) -> Result<Vec<CellResult>> {
    let mut env = env.clone();
    let gamma = env.spec().gamma;
    // Action noise gets its own stream so that start draws do not depend on
    // the evaluation mode.
    let mut action_rng = RandomStream::from_rng(&mut *rng);
    let mut out = Vec::with_capacity(EvalBand::ALL.len());
    for cell in EvalBand::ALL {
        let starts = env.sample_eval_starts(cell, episodes_per_band, rng)?;
        let (mut successes, mut total) = (0usize, 0.0);
        for s0 in &starts {
            let actor = agent.actor_for_start(s0);
            env.reset_to(s0)?;
            let mut state = s0.clone();
            let mut t = 0i32;
            loop {
                let action = if stochastic {
                    actor.sample_action(&state, &mut action_rng)?.0
                } else {
                    actor.mean_action(&state)?
                };
                let step = env.step(&action)?;
                if step.reward > 0.0 {
                    successes += 1;
                    total += gamma.powi(t) * step.reward;
                }
                t += 1;
                if step.done {
                    break;
                }
                state = step.next_state;
            }
        }
        let n = starts.len().max(1) as f64;
        out.push(CellResult {
            cell,
            episodes: starts.len(),
            successes,
            success_rate: successes as f64 / n,
            mean_discounted_return: total / n,
        });
    }
    Ok(out)
}

/// Shannon entropy (natural log) of the pool's occupancy histogram on a
/// `resolution`-per-axis grid over the box `[lower, upper]`. States on or
/// past the upper face fall in the last cell. An empty pool scores 0.
pub fn coverage_entropy(pool: &StartPool, lower: &[f64], upper: &[f64], resolution: usize) -> f64 {
    let entries = pool.entries();
    if entries.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for e in entries {
        let cell: Vec<usize> = e
            .state
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(x, (lo, hi))| {
                let f = ((x - lo) / (hi - lo) * resolution as f64).floor();
                (f.max(0.0) as usize).min(resolution - 1)
            })
            .collect();
        *counts.entry(cell).or_insert(0) += 1;
    }
    let n = entries.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0)
}
