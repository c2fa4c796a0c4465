use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::numerics::checkpoint::Checkpoint;
use crate::numerics::{GaussianPolicy, ValueFunction};
use crate::parallel::{train, ExchangeEvent, IterationReport, ModelSet, PoolLayout, TrainObserver, TrainOutcome};
use crate::ppo::ActorCritic;

use super::config::ExperimentConfig;
use super::metrics::{pool_header, write_metrics, write_pool_row, PoolSnapshotRow};

pub const CHECKPOINT_DIR: &str = "checkpoints";
/// Written next to the partial artifacts when a run fails.
pub const FAILED_MARKER: &str = "FAILED";

pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub outcome: TrainOutcome,
    pub models: ModelSet,
}

pub fn checkpoint_path(dir: &Path, model: usize, iteration: usize) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("model_{model}_iter_{iteration}.ckpt"))
}

fn save_checkpoint(path: &Path, learner: &ActorCritic) -> Result<()> {
    let mut ck = Checkpoint::default();
    ck.push_network("actor", &learner.actor.mean_spec, &learner.actor.mean_params);
    ck.push_vector("actor.log_std", &learner.actor.log_std);
    ck.push_vector("actor.mean_scale", &learner.actor.mean_scale);
    ck.push_network("critic", &learner.critic.spec, &learner.critic.params);
    ck.save(path)
}

/// Actor and critic stored by a run checkpoint.
pub fn load_policy(path: &Path) -> Result<(GaussianPolicy, ValueFunction)> {
    let ck = Checkpoint::load(path)?;
    let (spec, params) = ck.network("actor")?;
    let log_std = ck.entry("actor.log_std")?.values.clone();
    let mean_scale = ck.entry("actor.mean_scale")?.values.clone();
    let actor = GaussianPolicy::new(spec, params, log_std, mean_scale)?;
    let (spec, params) = ck.network("critic")?;
    Ok((actor, ValueFunction::new(spec, params)?))
}

struct ArtifactWriter {
    dir: PathBuf,
    metrics: csv::Writer<BufWriter<File>>,
    pools: csv::Writer<BufWriter<File>>,
    checkpoint_every: usize,
}

impl ArtifactWriter {
    fn create(dir: &Path, checkpoint_every: usize, models: &ModelSet, state_dim: usize) -> Result<Self> {
        let open = |name: &str| -> Result<csv::Writer<BufWriter<File>>> {
            Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
        };
        let metrics = open("metrics.csv")?;
        let mut pools = open("pool_snapshots.csv")?;
        pools.write_record(pool_header(state_dim))?;
        let seed_pools: Vec<(usize, &crate::rcg::StartPool)> = match &models.pools {
            PoolLayout::PerModel(p) => p.iter().map(|c| &c.starts_old).enumerate().collect(),
            PoolLayout::Common(c) => vec![(0, &c.starts_old)],
        };
        for (model_id, pool) in seed_pools {
            for e in pool.entries() {
                write_pool_row(
                    &mut pools,
                    &PoolSnapshotRow {
                        model_id,
                        iteration: e.added_at_iteration,
                        r_hat: e.r_hat,
                        state: e.state.clone(),
                    },
                )?;
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
            pools,
            checkpoint_every,
        })
    }

    fn flush(&mut self) -> Result<()> {
        self.metrics.flush()?;
        self.pools.flush()?;
        Ok(())
    }
}

impl TrainObserver for ArtifactWriter {
    fn iteration_done(&mut self, models: &ModelSet, report: &IterationReport) -> Result<()> {
        write_metrics(&mut self.metrics, &report.metrics)?;
        for a in &report.pool_additions {
            write_pool_row(
                &mut self.pools,
                &PoolSnapshotRow {
                    model_id: a.model_id,
                    iteration: a.iteration,
                    r_hat: Some(a.r_hat),
                    state: a.state.clone(),
                },
            )?;
        }
        self.flush()?;
        if self.checkpoint_every > 0 && report.iteration % self.checkpoint_every == 0 {
            for (i, l) in models.learners.iter().enumerate() {
                save_checkpoint(&checkpoint_path(&self.dir, i, report.iteration), l)?;
            }
        }
        Ok(())
    }
}

fn manifest(
    config: &ExperimentConfig,
    models: &ModelSet,
    exchanges: &[ExchangeEvent],
    best: Option<usize>,
    status: &str,
) -> String {
    let mut s = String::new();
    let a = &config.algorithm;
    let _ = writeln!(s, "run_id: {}", config.run_id());
    let _ = writeln!(s, "master_seed: {}", config.run.master_seed);
    let _ = writeln!(s, "environment: {}", config.env.name.name());
    let _ = writeln!(s, "strategy: {} ({})", a.strategy.name(), a.strategy.label());
    let _ = writeln!(s, "models: {}", a.models);
    let _ = writeln!(s, "k: {}", a.k);
    let _ = writeln!(s, "iterations_completed: {}", models.iteration);
    if let Some(b) = best {
        let _ = writeln!(s, "best_model: {b}");
    }
    let _ = writeln!(s, "status: {status}");
    let _ = writeln!(s, "exchanges: {}", exchanges.len());
    for e in exchanges {
        if e.plan.pairs.is_empty() {
            let _ = writeln!(s, "  iteration {} {} all", e.iteration, e.strategy.name());
        } else {
            let _ = writeln!(s, "  iteration {} {} {}", e.iteration, e.strategy.name(), e.plan);
        }
    }
    let _ = writeln!(s, "config:");
    s.push_str(&config.to_toml());
    s
}

/// Trains according to `config` and writes `metrics.csv`,
/// `pool_snapshots.csv`, `final_eval.csv`, `manifest.txt` and the final
/// checkpoints into the output directory.
///
/// On a failure after training started, the partial artifacts stay in place,
/// the manifest records the error and a `FAILED` marker file is written.
pub fn run(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let env = config.build_env()?;
    let dir = config.run.output_dir.clone();
    std::fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker)?;
    }

    let a = &config.algorithm;
    let mut models = ModelSet::new(
        &env,
        &config.network,
        config.ppo.learning_rate,
        a.models,
        config.run.master_seed,
        a.strategy.uses_common_pool(),
    )?;
    let mut writer = ArtifactWriter::create(&dir, config.run.checkpoint_every, &models, env.spec().state_dim)?;
    let result = train(
        &env,
        &mut models,
        &a.schedule(),
        &config.curriculum,
        &config.ppo,
        &config.train_options(),
        &mut writer,
    );
    writer.flush()?;

    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let msg = format!("FAILED: {e}");
            std::fs::write(dir.join("manifest.txt"), manifest(config, &models, &[], None, &msg))?;
            std::fs::write(&marker, format!("{e}\n"))?;
            return Err(e);
        }
    };

    for (i, l) in models.learners.iter().enumerate() {
        save_checkpoint(&checkpoint_path(&dir, i, models.iteration), l)?;
    }
    let mut final_eval = csv::Writer::from_path(dir.join("final_eval.csv"))?;
    write_metrics(&mut final_eval, &outcome.final_eval)?;
    final_eval.flush()?;
    let best = outcome.best.model_id();
    std::fs::write(
        dir.join("manifest.txt"),
        manifest(config, &models, &outcome.exchanges, Some(best), "ok"),
    )?;
    Ok(RunArtifacts {
        output_dir: dir,
        outcome,
        models,
    })
}

