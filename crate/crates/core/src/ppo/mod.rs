//! Clipped-surrogate PPO with a separate state-value critic.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::envs::{DoneReason, EnvSpec, PointEnv, State};
use crate::error::{Error, Result};
use crate::numerics::{backward_accumulate, AdamState, ForwardCache, GaussianPolicy, MlpSpec, ValueFunction};
use crate::RandomStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub gae_lambda: f64,
    pub value_loss_coeff: f64,
    /// Environment steps collected per update.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Ends the update early once a minibatch's approximate KL divergence
    /// from the collection policy exceeds 1.5× this value. Off by default.
    pub target_kl: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            epochs_per_update: 10,
            minibatch_size: 256,
            gae_lambda: 0.95,
            value_loss_coeff: 0.5,
            batch_size: 2056,
            learning_rate: 3e-4,
            target_kl: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Config(format!("clip_epsilon {} outside (0, 1)", self.clip_epsilon)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config(format!("gae_lambda {} outside [0, 1]", self.gae_lambda)));
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs, minibatch size and batch size must be positive".into()));
        }
        if !(self.value_loss_coeff > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("value_loss_coeff and learning_rate must be positive".into()));
        }
        if let Some(kl) = self.target_kl {
            if !(kl > 0.0) {
                return Err(Error::Config(format!("target_kl {kl} must be positive")));
            }
        }
        Ok(())
    }
}

/// One episode. `values[t]` is the critic's value of `states[t]` at
/// collection time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start_state: State,
    pub states: Vec<State>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub final_state: State,
    pub done_reason: DoneReason,
    /// Value used after the last step: 0 after a terminal outcome, the
    /// critic's value of `final_state` after a horizon cut-off.
    pub bootstrap_value: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn succeeded(&self) -> bool {
        self.rewards.iter().any(|r| *r > 0.0)
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards
            .iter()
            .enumerate()
            .map(|(t, r)| gamma.powi(t as i32) * r)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub trajectories: Vec<Trajectory>,
    pub total_steps: usize,
}

impl RolloutBatch {
    pub fn success_rate(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().filter(|t| t.succeeded()).count() as f64 / self.trajectories.len() as f64
    }

    pub fn mean_return(&self, gamma: f64) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().map(|t| t.discounted_return(gamma)).sum::<f64>() / self.trajectories.len() as f64
    }
}

/// Runs whole episodes from uniformly drawn starts until at least
/// `batch_size` steps are collected.
pub fn collect_rollouts(
    env: &mut PointEnv,
    actor: &GaussianPolicy,
    critic: &ValueFunction,
    starts: &[State],
    batch_size: usize,
    rng: &mut RandomStream,
) -> Result<RolloutBatch> {
    if starts.is_empty() {
        return Err(Error::Usage("rollout start list is empty".into()));
    }
    let state_dim = env.spec().state_dim;
    if actor.mean_spec.input_dim != state_dim || critic.spec.input_dim != state_dim {
        return Err(Error::Dimension {
            context: "network input vs state",
            expected: state_dim,
            actual: actor.mean_spec.input_dim,
        });
    }
    let mut actor_cache = ForwardCache::new(&actor.mean_spec);
    let mut critic_cache = ForwardCache::new(&critic.spec);
    let std: Vec<f64> = actor.log_std.iter().map(|l| l.exp()).collect();
    let mut mean = Vec::with_capacity(actor.action_dim());

    let mut batch = RolloutBatch::default();
    while batch.total_steps < batch_size {
        let start = &starts[rng.random_range(0..starts.len())];
        env.reset_to(start)?;
        let mut traj = Trajectory {
            start_state: start.clone(),
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
            final_state: start.clone(),
            done_reason: DoneReason::NotDone,
            bootstrap_value: 0.0,
        };
        let mut state = start.clone();
        loop {
            let value = critic.value_cached(&state, &mut critic_cache);
            actor.mean_cached(&state, &mut actor_cache, &mut mean);
            let action: Vec<f64> = mean
                .iter()
                .zip(&std)
                .map(|(m, s)| {
                    let eps: f64 = StandardNormal.sample(rng);
                    m + s * eps
                })
                .collect();
            let log_prob = actor.log_prob_at(&mean, &action);
            let step = env.step(&action)?;
            traj.states.push(state);
            traj.actions.push(action);
            traj.rewards.push(step.reward);
            traj.log_probs.push(log_prob);
            traj.values.push(value);
            if step.done {
                traj.bootstrap_value = match step.done_reason {
                    DoneReason::HorizonExceeded => critic.value_cached(&step.next_state, &mut critic_cache),
                    _ => 0.0,
                };
                traj.done_reason = step.done_reason;
                traj.final_state = step.next_state;
                break;
            }
            state = step.next_state;
        }
        batch.total_steps += traj.len();
        batch.trajectories.push(traj);
    }
    Ok(batch)
}

/// Per-step advantages and value targets, flattened in batch order.
#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Generalized advantage estimation over every trajectory.
pub fn compute_advantages(batch: &RolloutBatch, gamma: f64, gae_lambda: f64) -> Advantages {
    let mut advantages = Vec::with_capacity(batch.total_steps);
    let mut returns = Vec::with_capacity(batch.total_steps);
    for traj in &batch.trajectories {
        let n = traj.len();
        let mut adv = vec![0.0; n];
        let mut next_value = traj.bootstrap_value;
        let mut carry = 0.0;
        for t in (0..n).rev() {
            let delta = traj.rewards[t] + gamma * next_value - traj.values[t];
            carry = delta + gamma * gae_lambda * carry;
            adv[t] = carry;
            next_value = traj.values[t];
        }
        returns.extend(adv.iter().zip(&traj.values).map(|(a, v)| a + v));
        advantages.extend(adv);
    }
    Advantages { advantages, returns }
}

/// Shifts and scales to mean 0, std 1 (population std). A constant input
/// becomes all zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 { (*a - mean) / std } else { 0.0 };
    }
}

/// Clipped surrogate `min(r·A, clip(r, 1−ε, 1+ε)·A)` and its derivative
/// with respect to the log-probability.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_epsilon: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage;
    if unclipped <= clipped {
        // d(r·A)/d log π = r·A
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    /// Mean critic loss over each epoch's minibatches, measured before each
    /// minibatch's step.
    pub critic_loss_per_epoch: Vec<f64>,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    /// Largest |ratio − 1| in the first minibatch, before any step.
    pub first_minibatch_max_ratio_deviation: f64,
    pub gradient_steps: usize,
    /// Epoch in which the KL limit ended the update, if it did.
    pub kl_stop_epoch: Option<usize>,
    /// Set when a non-finite loss or gradient stopped the update; parameters
    /// were restored to their values before the update.
    pub aborted: Option<String>,
}

/// One learner's trainable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: GaussianPolicy,
    pub critic: ValueFunction,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

/// Network shapes and initial exploration noise for new learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_dims: Vec<usize>,
    /// Initial policy std as a fraction of the action half-range.
    pub init_std_fraction: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![256, 256],
            init_std_fraction: 0.5,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden_dims must be a nonempty list of positive widths".into()));
        }
        if !(self.init_std_fraction > 0.0) {
            return Err(Error::Config("init_std_fraction must be positive".into()));
        }
        Ok(())
    }
}

impl ActorCritic {
    /// Fresh actor and critic for `env`. The policy mean is scaled to the
    /// action half-range and its output layer starts small, so initial
    /// actions are centred on zero.
    pub fn initialize(env: &EnvSpec, network: &NetworkConfig, learning_rate: f64, rng: &mut RandomStream) -> Result<Self> {
        network.validate()?;
        let actor_spec = MlpSpec::new(env.state_dim, network.hidden_dims.clone(), env.action_dim)?;
        let mut actor_params = actor_spec.init_params(rng);
        let out = actor_spec.output_layer_offset();
        for w in &mut actor_params[out..] {
            *w *= 0.1;
        }
        let half = env.action_half_range();
        let log_std = half.iter().map(|h| (h * network.init_std_fraction).ln()).collect();
        let actor = GaussianPolicy::new(actor_spec, actor_params, log_std, half)?;
        let critic_spec = MlpSpec::new(env.state_dim, network.hidden_dims.clone(), 1)?;
        let critic_params = critic_spec.init_params(rng);
        let critic = ValueFunction::new(critic_spec, critic_params)?;
        Ok(Self::new(actor, critic, learning_rate))
    }

    /// Actor parameters, then `log_std`, then critic parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.actor.trainable_len() + self.critic.params.len());
        v.extend_from_slice(&self.actor.mean_params);
        v.extend_from_slice(&self.actor.log_std);
        v.extend_from_slice(&self.critic.params);
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let a = self.actor.mean_params.len();
        let l = self.actor.log_std.len();
        let c = self.critic.params.len();
        crate::error::check_dim("flat parameters", a + l + c, flat.len())?;
        self.actor.mean_params.copy_from_slice(&flat[..a]);
        self.actor.log_std.copy_from_slice(&flat[a..a + l]);
        self.actor.clamp_log_std();
        self.critic.params.copy_from_slice(&flat[a + l..]);
        Ok(())
    }

    pub fn new(actor: GaussianPolicy, critic: ValueFunction, learning_rate: f64) -> Self {
        let actor_opt = AdamState::new(actor.trainable_len(), learning_rate);
        let critic_opt = AdamState::new(critic.params.len(), learning_rate);
        Self {
            actor,
            critic,
            actor_opt,
            critic_opt,
        }
    }
}

struct Sample<'a> {
    state: &'a [f64],
    action: &'a [f64],
    old_log_prob: f64,
    advantage: f64,
    target: f64,
}

/// PPO update over `epochs_per_update` passes of shuffled minibatches.
pub fn ppo_update(
    learner: &mut ActorCritic,
    batch: &RolloutBatch,
    config: &PpoConfig,
    gamma: f64,
    rng: &mut RandomStream,
) -> Result<PpoStats> {
    let Advantages {
        mut advantages,
        returns,
    } = compute_advantages(batch, gamma, config.gae_lambda);
    normalize_advantages(&mut advantages);

    let mut samples = Vec::with_capacity(batch.total_steps);
    for traj in &batch.trajectories {
        for t in 0..traj.len() {
            let i = samples.len();
            samples.push(Sample {
                state: &traj.states[t],
                action: &traj.actions[t],
                old_log_prob: traj.log_probs[t],
                advantage: advantages[i],
                target: returns[i],
            });
        }
    }
    if samples.is_empty() {
        return Ok(PpoStats::default());
    }

    let backup = learner.clone();
    let result = run_epochs(learner, &samples, config, rng);
    match result {
        Ok(stats) => Ok(stats),
        Err(reason) => {
            *learner = backup;
            Ok(PpoStats {
                aborted: Some(reason),
                ..PpoStats::default()
            })
        }
    }
}

fn run_epochs(
    learner: &mut ActorCritic,
    samples: &[Sample<'_>],
    config: &PpoConfig,
    rng: &mut RandomStream,
) -> std::result::Result<PpoStats, String> {
    let eps = config.clip_epsilon;
    let net_len = learner.actor.mean_params.len();
    let action_dim = learner.actor.action_dim();
    let mut actor_cache = ForwardCache::new(&learner.actor.mean_spec);
    let mut critic_cache = ForwardCache::new(&learner.critic.spec);
    let mut actor_grad = vec![0.0; learner.actor.trainable_len()];
    let mut critic_grad = vec![0.0; learner.critic.params.len()];
    let mut actor_flat = vec![0.0; learner.actor.trainable_len()];
    let mut mean = Vec::with_capacity(action_dim);
    let mut out_grad = vec![0.0; action_dim];

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = PpoStats::default();
    let (mut ratio_sum, mut clipped, mut seen) = (0.0, 0usize, 0usize);
    let (mut actor_loss_sum, mut critic_loss_sum, mut minibatches) = (0.0, 0.0, 0usize);
    let mut processed = 0usize;
    let kl_limit = config.target_kl.map(|t| 1.5 * t);

    'epochs: for epoch in 0..config.epochs_per_update {
        order.shuffle(rng);
        let (mut epoch_critic, mut epoch_samples) = (0.0, 0usize);
        for chunk in order.chunks(config.minibatch_size) {
            actor_grad.iter_mut().for_each(|g| *g = 0.0);
            critic_grad.iter_mut().for_each(|g| *g = 0.0);
            let n = chunk.len() as f64;
            let inv_var: Vec<f64> = learner.actor.log_std.iter().map(|l| (-2.0 * l).exp()).collect();
            let (mut actor_loss, mut critic_loss, mut approx_kl) = (0.0, 0.0, 0.0);

            for &i in chunk {
                let s = &samples[i];
                learner.actor.mean_cached(s.state, &mut actor_cache, &mut mean);
                let log_prob = learner.actor.log_prob_at(&mean, s.action);
                let log_ratio = log_prob - s.old_log_prob;
                let ratio = log_ratio.exp();
                approx_kl += (ratio - 1.0 - log_ratio) / n;
                if epoch == 0 && minibatches == 0 {
                    stats.first_minibatch_max_ratio_deviation =
                        stats.first_minibatch_max_ratio_deviation.max((ratio - 1.0).abs());
                }
                let (objective, d_logp) = clipped_surrogate(ratio, s.advantage, eps);
                actor_loss -= objective / n;
                ratio_sum += ratio;
                seen += 1;
                if (ratio - 1.0).abs() > eps {
                    clipped += 1;
                }
                // loss = −objective/n
                let coeff = -d_logp / n;
                if coeff != 0.0 {
                    for j in 0..action_dim {
                        let diff = s.action[j] - mean[j];
                        out_grad[j] = coeff * diff * inv_var[j] * learner.actor.mean_derivative(j, mean[j]);
                        actor_grad[net_len + j] += coeff * (diff * diff * inv_var[j] - 1.0);
                    }
                    backward_accumulate(
                        &learner.actor.mean_spec,
                        &learner.actor.mean_params,
                        &mut actor_cache,
                        &out_grad,
                        &mut actor_grad[..net_len],
                    );
                }

                let v = learner.critic.value_cached(s.state, &mut critic_cache);
                let err = v - s.target;
                critic_loss += err * err / n;
                let g = [config.value_loss_coeff * 2.0 * err / n];
                backward_accumulate(
                    &learner.critic.spec,
                    &learner.critic.params,
                    &mut critic_cache,
                    &g,
                    &mut critic_grad,
                );
            }

            if !actor_loss.is_finite() || !critic_loss.is_finite() {
                return Err(format!(
                    "non-finite loss (actor {actor_loss}, critic {critic_loss}) in epoch {epoch}"
                ));
            }
            if kl_limit.is_some_and(|limit| approx_kl > limit) {
                stats.kl_stop_epoch = Some(epoch);
                if epoch_samples > 0 {
                    stats.critic_loss_per_epoch.push(epoch_critic / epoch_samples as f64);
                }
                break 'epochs;
            }

            actor_flat[..net_len].copy_from_slice(&learner.actor.mean_params);
            actor_flat[net_len..].copy_from_slice(&learner.actor.log_std);
            learner
                .actor_opt
                .step(&mut actor_flat, &actor_grad)
                .map_err(|e| format!("actor step: {e}"))?;
            learner.actor.mean_params.copy_from_slice(&actor_flat[..net_len]);
            learner.actor.log_std.copy_from_slice(&actor_flat[net_len..]);
            learner.actor.clamp_log_std();
            learner
                .critic_opt
                .step(&mut learner.critic.params, &critic_grad)
                .map_err(|e| format!("critic step: {e}"))?;
            if !learner.actor.mean_params.all_finite() || !learner.critic.params.all_finite() {
                return Err("non-finite parameters after step".into());
            }

            // Weighted by minibatch size so a short trailing chunk does not
            // dominate the averages.
            actor_loss_sum += actor_loss * n;
            critic_loss_sum += critic_loss * n;
            epoch_critic += critic_loss * n;
            epoch_samples += chunk.len();
            processed += chunk.len();
            minibatches += 1;
        }
        stats.critic_loss_per_epoch.push(epoch_critic / epoch_samples as f64);
    }

    let total = processed.max(1) as f64;
    stats.actor_loss = actor_loss_sum / total;
    stats.critic_loss = critic_loss_sum / total;
    stats.clip_fraction = clipped as f64 / seen as f64;
    stats.mean_ratio = ratio_sum / seen as f64;
    stats.gradient_steps = minibatches;
    Ok(stats)
}
