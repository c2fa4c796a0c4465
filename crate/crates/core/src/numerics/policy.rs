//! Diagonal Gaussian policy and state-value network.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{forward_cached, mlp_forward, ForwardCache, MlpSpec, ParamVector};
use crate::error::{check_dim, Result};
use crate::RandomStream;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Anything that can choose actions for a state.
pub trait Actor {
    /// Stochastic action and its log density.
    fn sample_action(&self, state: &[f64], rng: &mut RandomStream) -> Result<(Vec<f64>, f64)>;

    /// Deterministic (mode) action.
    fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>>;
}

/// Chooses the actor that controls an episode, given its start state.
///
/// Every [`Actor`] is an agent that controls all of its episodes itself.
pub trait Agent {
    fn actor_for_start(&self, start: &[f64]) -> &dyn Actor;
}

impl<A: Actor> Agent for A {
    fn actor_for_start(&self, _start: &[f64]) -> &dyn Actor {
        self
    }
}

/// Gaussian policy with a state-dependent mean and a state-independent
/// log standard deviation.
///
/// The mean is `mean_scale ⊙ tanh(net(state))`, which keeps it inside the
/// action box when `mean_scale` is the box's half-width. Without the bound the
/// mean drifts past the clip limits, every sample clips to the same corner and
/// the policy gradient loses its signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean_spec: MlpSpec,
    pub mean_params: ParamVector,
    pub log_std: Vec<f64>,
    pub mean_scale: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(
        mean_spec: MlpSpec,
        mean_params: ParamVector,
        log_std: Vec<f64>,
        mean_scale: Vec<f64>,
    ) -> Result<Self> {
        mean_spec.validate()?;
        check_dim("policy parameters", mean_spec.param_count(), mean_params.len())?;
        check_dim("policy log_std", mean_spec.output_dim, log_std.len())?;
        check_dim("policy mean scale", mean_spec.output_dim, mean_scale.len())?;
        let mut policy = Self {
            mean_spec,
            mean_params,
            log_std,
            mean_scale,
        };
        policy.clamp_log_std();
        Ok(policy)
    }

    pub fn action_dim(&self) -> usize {
        self.mean_spec.output_dim
    }

    pub fn clamp_log_std(&mut self) {
        for v in &mut self.log_std {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut out = mlp_forward(&self.mean_spec, &self.mean_params, state)?;
        for (m, s) in out.iter_mut().zip(&self.mean_scale) {
            *m = s * m.tanh();
        }
        Ok(out)
    }

    /// Mean using a caller-owned cache; shapes must already be checked.
    pub(crate) fn mean_cached(&self, state: &[f64], cache: &mut ForwardCache, mean: &mut Vec<f64>) {
        let raw = forward_cached(&self.mean_spec, &self.mean_params, state, cache);
        mean.clear();
        mean.extend(raw.iter().zip(&self.mean_scale).map(|(r, s)| s * r.tanh()));
    }

    /// ∂mean/∂net for one action dimension, from the mean itself.
    #[inline]
    pub(crate) fn mean_derivative(&self, dim: usize, mean: f64) -> f64 {
        let s = self.mean_scale[dim];
        s - mean * mean / s
    }

    /// Diagonal Gaussian log density of `action` around `mean`.
    pub fn log_prob_at(&self, mean: &[f64], action: &[f64]) -> f64 {
        mean.iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((m, a), ls)| {
                let z = (a - m) * (-ls).exp();
                -0.5 * z * z - ls - HALF_LN_2PI
            })
            .sum()
    }

    pub fn sample(&self, state: &[f64], rng: &mut RandomStream) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(state)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let eps: f64 = StandardNormal.sample(rng);
                m + ls.exp() * eps
            })
            .collect();
        let lp = self.log_prob_at(&mean, &action);
        Ok((action, lp))
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        check_dim("policy action", self.action_dim(), action.len())?;
        let mean = self.mean(state)?;
        Ok(self.log_prob_at(&mean, action))
    }

    /// Number of trainable scalars: network parameters followed by `log_std`.
    pub fn trainable_len(&self) -> usize {
        self.mean_params.len() + self.log_std.len()
    }
}

impl Actor for GaussianPolicy {
    fn sample_action(&self, state: &[f64], rng: &mut RandomStream) -> Result<(Vec<f64>, f64)> {
        self.sample(state, rng)
    }

    fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.mean(state)
    }
}

/// State-value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl ValueFunction {
    pub fn new(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        check_dim("critic output", 1, spec.output_dim)?;
        check_dim("critic parameters", spec.param_count(), params.len())?;
        Ok(Self { spec, params })
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(mlp_forward(&self.spec, &self.params, state)?[0])
    }

    pub(crate) fn value_cached(&self, state: &[f64], cache: &mut ForwardCache) -> f64 {
        forward_cached(&self.spec, &self.params, state, cache)[0]
    }
}
