//! Fully connected tanh network with a linear output layer.
//!
//! Parameters live in one flat [`ParamVector`]. Each layer stores its weight
//! matrix row-major as `[fan_out][fan_in]`, followed by its `fan_out` biases.

use std::cell::RefCell;
use std::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }
}

/// Architecture of a feed-forward network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    /// Tanh hidden layers, linear output.
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::Config("network needs at least one hidden layer".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("network layer widths must be positive".into()));
        }
        Ok(())
    }

    /// `[input, hidden.., output]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_dims.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend_from_slice(&self.hidden_dims);
        sizes.push(self.output_dim);
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes()
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn layer_count(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layer_count() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Weights and biases uniform in ±1/√fan_in.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut values = Vec::with_capacity(self.param_count());
        for w in self.layer_sizes().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            values.extend((0..fan_out).map(|_| rng.random_range(-bound..bound)));
        }
        ParamVector(values)
    }

    /// Offset of the output layer's weight block inside the parameter vector.
    pub(crate) fn output_layer_offset(&self) -> usize {
        let sizes = self.layer_sizes();
        sizes[..sizes.len() - 1]
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        check_dim("network parameters", self.param_count(), params.len())
    }
}

/// Flat parameter storage for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Per-layer activations retained by a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl ForwardCache {
    pub fn new(spec: &MlpSpec) -> Self {
        Self {
            activations: spec.layer_sizes().iter().map(|&n| vec![0.0; n]).collect(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Forward pass writing every layer's activation into `cache`.
///
/// Shapes are not checked here; callers go through [`mlp_forward`] or check once
/// up front.
pub(crate) fn forward_cached<'c>(
    spec: &MlpSpec,
    params: &[f64],
    input: &[f64],
    cache: &'c mut ForwardCache,
) -> &'c [f64] {
    let sizes = spec.layer_sizes();
    if cache.activations.len() != sizes.len()
        || cache.activations.iter().zip(&sizes).any(|(a, &n)| a.len() != n)
    {
        *cache = ForwardCache::new(spec);
    }
    cache.activations[0].copy_from_slice(input);
    let mut offset = 0;
    for layer in 0..spec.layer_count() {
        let (fan_in, fan_out) = (sizes[layer], sizes[layer + 1]);
        let weights = &params[offset..offset + fan_in * fan_out];
        let biases = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;
        let act = spec.activation(layer);
        let (prev, rest) = cache.activations.split_at_mut(layer + 1);
        let x = &prev[layer];
        let y = &mut rest[0];
        for o in 0..fan_out {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let z = row.iter().zip(x).fold(biases[o], |acc, (w, xi)| acc + w * xi);
            y[o] = act.apply(z);
        }
    }
    cache.output()
}

/// Adds ∂(output·output_gradient)/∂params to `grad`, using activations from the
/// last [`forward_cached`] call on the same cache.
pub(crate) fn backward_accumulate(
    spec: &MlpSpec,
    params: &[f64],
    cache: &mut ForwardCache,
    output_gradient: &[f64],
    grad: &mut [f64],
) {
    let sizes = spec.layer_sizes();
    let layers = spec.layer_count();
    let mut offsets = Vec::with_capacity(layers);
    let mut off = 0;
    for w in sizes.windows(2) {
        offsets.push(off);
        off += (w[0] + 1) * w[1];
    }

    let ForwardCache {
        activations,
        delta,
        delta_prev,
    } = cache;

    let out_act = spec.activation(layers - 1);
    delta.clear();
    delta.extend(
        output_gradient
            .iter()
            .zip(&activations[layers])
            .map(|(g, a)| g * out_act.derivative_from_output(*a)),
    );

    for layer in (0..layers).rev() {
        let (fan_in, fan_out) = (sizes[layer], sizes[layer + 1]);
        let offset = offsets[layer];
        let x = &activations[layer];
        {
            let (gw, gb) = grad[offset..offset + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, xi) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
        }
        if layer == 0 {
            break;
        }
        let weights = &params[offset..offset + fan_in * fan_out];
        delta_prev.clear();
        delta_prev.resize(fan_in, 0.0);
        for o in 0..fan_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            for (dp, w) in delta_prev.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                *dp += w * d;
            }
        }
        let act = spec.activation(layer - 1);
        for (dp, a) in delta_prev.iter_mut().zip(x) {
            *dp *= act.derivative_from_output(*a);
        }
        std::mem::swap(delta, delta_prev);
    }
}

thread_local! {
    static SCRATCH: RefCell<ForwardCache> = RefCell::new(ForwardCache::default());
}

pub fn mlp_forward(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    check_dim("network input", spec.input_dim, input.len())?;
    Ok(SCRATCH.with(|c| forward_cached(spec, params, input, &mut c.borrow_mut()).to_vec()))
}

/// Gradient of `output · output_gradient` with respect to every parameter.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &[f64],
    input: &[f64],
    output_gradient: &[f64],
) -> Result<ParamVector> {
    spec.check_params(params)?;
    check_dim("network input", spec.input_dim, input.len())?;
    check_dim("output gradient", spec.output_dim, output_gradient.len())?;
    let mut cache = ForwardCache::new(spec);
    forward_cached(spec, params, input, &mut cache);
    let mut grad = ParamVector::zeros(params.len());
    backward_accumulate(spec, params, &mut cache, output_gradient, &mut grad);
    Ok(grad)
}
