//! Network, policy and optimizer substrate shared by actors and critics.

mod adam;
pub mod checkpoint;
mod mlp;
mod policy;

pub use adam::{AdamState, DEFAULT_LEARNING_RATE};
pub use mlp::{mlp_backward, mlp_forward, Activation, ForwardCache, MlpSpec, ParamVector};
pub(crate) use mlp::backward_accumulate;
pub use policy::{Actor, Agent, GaussianPolicy, ValueFunction, LOG_STD_MAX, LOG_STD_MIN};
