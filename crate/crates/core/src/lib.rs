//! Parallelized reverse curriculum generation for actor-critic PPO.
//!
//! Several actor-critic learners are trained side by side on sparse-reward
//! environments that can be reset to any feasible state. Each learner grows
//! its own pool of start states outward from the goal, and at synchronization
//! barriers the learners exchange critics (or pools, or parameters) according
//! to a [`parallel::SwapSchedule`].
//!
//! Module map:
//!
//! - [`numerics`]: tanh MLP with analytic gradients, Gaussian policy, Adam,
//!   binary checkpoints.
//! - [`envs`]: point environments with reset-to-state and blocked movement.
//! - [`rcg`]: start-state expansion, return estimation, good-start pools.
//! - [`ppo`]: rollouts, advantages, clipped-surrogate updates.
//! - [`parallel`]: model sets, pairing, exchange strategies, the training loop.
//! - [`harness`]: configuration, evaluation grid, metrics, K search.

pub mod envs;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod parallel;
pub mod ppo;
pub mod rcg;

pub use error::{Error, Result};

use rand::SeedableRng;

/// Random stream type used everywhere. Seeded streams are reproducible
/// across platforms.
pub type RandomStream = rand_chacha::ChaCha8Rng;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn derive_stream(seed: u64, stream: u64) -> RandomStream {
    let mut rng = RandomStream::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
