use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{EnvKind, EnvOverrides, PointEnv};
use crate::error::{Error, Result};
use crate::parallel::{Strategy, SwapSchedule, TrainOptions};
use crate::ppo::{NetworkConfig, PpoConfig};
use crate::rcg::CurriculumConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub name: EnvKind,
    pub overrides: EnvOverrides,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            name: EnvKind::PointMaze,
            overrides: EnvOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSection {
    pub strategy: Strategy,
    pub models: usize,
    pub k: usize,
    pub async_sync_period: usize,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        let s = SwapSchedule::default();
        Self {
            strategy: s.strategy,
            models: 2,
            k: s.k,
            async_sync_period: s.async_sync_period,
        }
    }
}

impl AlgorithmSection {
    pub fn schedule(&self) -> SwapSchedule {
        SwapSchedule {
            strategy: self.strategy,
            k: self.k,
            async_sync_period: self.async_sync_period,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub total_iterations: usize,
    pub eval_every: usize,
    pub eval_episodes_per_band: usize,
    pub stochastic_eval: bool,
    pub coverage_resolution: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Also checkpoint every this many iterations; 0 keeps only the final
    /// checkpoints.
    pub checkpoint_every: usize,
    pub parallel: bool,
    /// Overrides the run id written to every metrics row.
    pub run_name: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        let t = TrainOptions::default();
        Self {
            total_iterations: t.total_iterations,
            eval_every: t.eval_every,
            eval_episodes_per_band: t.eval_episodes_per_band,
            stochastic_eval: t.stochastic_eval,
            coverage_resolution: t.coverage_resolution,
            master_seed: 0,
            output_dir: PathBuf::from("runs/default"),
            checkpoint_every: 0,
            parallel: t.parallel,
            run_name: None,
        }
    }
}

/// Full description of one training run. Serialized as TOML with the
/// sections `[env]`, `[env.overrides]`, `[algorithm]`, `[curriculum]`,
/// `[ppo]`, `[network]` and `[run]`; every key is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub algorithm: AlgorithmSection,
    pub curriculum: CurriculumConfig,
    pub ppo: PpoConfig,
    pub network: NetworkConfig,
    pub run: RunSection,
}

impl ExperimentConfig {
    /// Reduced sizes that train a point environment in minutes on one core.
    pub fn desk() -> Self {
        Self {
            ppo: PpoConfig {
                batch_size: 512,
                epochs_per_update: 4,
                minibatch_size: 128,
                learning_rate: 1e-3,
                target_kl: Some(0.01),
                ..PpoConfig::default()
            },
            network: NetworkConfig {
                hidden_dims: vec![32, 32],
                init_std_fraction: 1.0,
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn build_env(&self) -> Result<PointEnv> {
        PointEnv::with_overrides(self.env.name, &self.env.overrides)
    }

    /// Checks everything that can be checked without training.
    pub fn validate(&self) -> Result<()> {
        let env = self.build_env()?;
        self.algorithm.schedule().validate(self.algorithm.models)?;
        self.curriculum.validate(env.spec().action_dim)?;
        self.ppo.validate()?;
        self.network.validate()?;
        self.train_options().validate()?;
        Ok(())
    }

    /// `run.run_name` if set, otherwise an id built from the settings that
    /// distinguish runs.
    pub fn run_id(&self) -> String {
        if let Some(name) = &self.run.run_name {
            return name.clone();
        }
        format!(
            "{}-{}-m{}-k{}-s{}",
            self.env.name.name(),
            self.algorithm.strategy.name(),
            self.algorithm.models,
            self.algorithm.k,
            self.run.master_seed
        )
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            total_iterations: self.run.total_iterations,
            eval_every: self.run.eval_every,
            eval_episodes_per_band: self.run.eval_episodes_per_band,
            stochastic_eval: self.run.stochastic_eval,
            coverage_resolution: self.run.coverage_resolution,
            run_id: self.run_id(),
            // distinct from every model stream seed
            eval_seed: self.run.master_seed ^ 0x9e37_79b9_7f4a_7c15,
            parallel: self.run.parallel,
        }
    }

    pub fn apply(&mut self, o: &CliOverrides) {
        if let Some(s) = o.seed {
            self.run.master_seed = s;
        }
        if let Some(e) = o.env {
            self.env.name = e;
        }
        if let Some(s) = o.strategy {
            self.algorithm.strategy = s;
        }
        if let Some(m) = o.models {
            self.algorithm.models = m;
        }
        if let Some(k) = o.swap_every {
            self.algorithm.k = k;
        }
        if let Some(i) = o.iterations {
            self.run.total_iterations = i;
        }
        if let Some(out) = &o.out {
            self.run.output_dir = out.clone();
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub env: Option<EnvKind>,
    pub strategy: Option<Strategy>,
    pub models: Option<usize>,
    pub swap_every: Option<usize>,
    pub iterations: Option<usize>,
    pub out: Option<PathBuf>,
}
