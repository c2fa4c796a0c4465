use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prcg::envs::{EnvKind, PointEnv};
use prcg::harness::{
    coverage_entropy, evaluate, k_search, load_policy, read_pool_snapshots, run, CliOverrides, ExperimentConfig,
};
use prcg::parallel::Strategy;
use prcg::rcg::StartPool;
use prcg::{derive_stream, Error, Result};

#[derive(Parser)]
#[command(name = "prcg", version, about = "Parallel reverse curriculum training for point environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write metrics, pool snapshots, manifest and checkpoints.
    Run(Common),
    /// Evaluate a checkpointed policy on the six-cell grid.
    Eval(EvalArgs),
    /// Search the exchange rate K against the independent baseline.
    Ksearch(KsearchArgs),
    /// Summarise the good-starts pools recorded by a run.
    InspectPool(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Default sizes (256-unit layers, 2056-step batches).
    Full,
    /// Small networks and batches for a single CPU core.
    Desk,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base settings when no config file is given.
    #[arg(long, value_enum, default_value = "full")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    models: Option<usize>,
    #[arg(long = "swap-every")]
    swap_every: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, self.preset) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, Preset::Full) => ExperimentConfig::default(),
            (None, Preset::Desk) => ExperimentConfig::desk(),
        };
        c.apply(&CliOverrides {
            seed: self.seed,
            env: self.env.as_deref().map(str::parse::<EnvKind>).transpose()?,
            strategy: self.strategy.as_deref().map(str::parse::<Strategy>).transpose()?,
            models: self.models,
            swap_every: self.swap_every,
            iterations: self.iterations,
            out: self.out.clone(),
        });
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `run`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "point-maze")]
    env: String,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample actions instead of using the policy mean.
    #[arg(long)]
    stochastic: bool,
}

#[derive(Args)]
struct KsearchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "k-values", value_delimiter = ',', default_value = "5,10,20,50")]
    k_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct InspectArgs {
    /// Run output directory.
    #[arg(long)]
    run: PathBuf,
    /// Grid cells per axis for the coverage entropy.
    #[arg(long, default_value_t = 20)]
    resolution: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(common) => {
            let config = common.config()?;
            let artifacts = run(&config)?;
            println!("{}", artifacts.output_dir.display());
            print_rows(&artifacts.outcome.final_eval);
            Ok(())
        }
        Command::Eval(args) => {
            let env = PointEnv::builtin(args.env.parse()?);
            let (actor, _) = load_policy(&args.checkpoint)?;
            let mut rng = derive_stream(args.seed, 0);
            let table = evaluate(&actor, &env, args.episodes, args.stochastic, &mut rng)?;
            println!("band,pose_mode,episodes,success_rate,mean_discounted_return");
            for c in table {
                println!(
                    "{:?},{:?},{},{},{}",
                    c.cell.band, c.cell.pose_mode, c.episodes, c.success_rate, c.mean_discounted_return
                );
            }
            Ok(())
        }
        Command::Ksearch(args) => {
            let mut config = args.common.config()?;
            config.algorithm.strategy = Strategy::SwapCritics;
            config.validate()?;
            let out = config.run.output_dir.clone();
            std::fs::create_dir_all(&out)?;
            let summary = k_search(
                &config,
                &args.k_values,
                config.run.total_iterations,
                &args.seeds,
                &out,
            )?;
            summary.write_csv(std::io::stdout())?;
            Ok(())
        }
        Command::InspectPool(args) => inspect_pool(&args.run, args.resolution),
    }
}

fn print_rows(rows: &[prcg::harness::MetricsRecord]) {
    for r in rows {
        if let (Some(b), Some(p)) = (r.band, r.pose_mode) {
            println!("{b:?}/{p:?}: success {:.3}, return {:.3}", r.success_rate, r.mean_discounted_return);
        }
    }
}

fn inspect_pool(dir: &Path, resolution: usize) -> Result<()> {
    if resolution < 2 {
        return Err(Error::Config("resolution must be at least 2".into()));
    }
    let path = dir.join("pool_snapshots.csv");
    let file = std::fs::File::open(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let rows = read_pool_snapshots(file)?;
    let mut models: Vec<usize> = rows.iter().map(|r| r.model_id).collect();
    models.sort_unstable();
    models.dedup();
    println!("model_id,pool_size,last_iteration,coverage_entropy");
    for m in models {
        let states: Vec<_> = rows.iter().filter(|r| r.model_id == m).map(|r| r.state.clone()).collect();
        let last = rows.iter().filter(|r| r.model_id == m).map(|r| r.iteration).max().unwrap_or(0);
        let dim = states.first().map_or(0, |s| s.len());
        let pool = StartPool::from_states(states, 0);
        let h = coverage_entropy(&pool, &vec![0.0; dim], &vec![1.0; dim], resolution);
        println!("{m},{},{last},{h}", pool.len());
    }
    Ok(())
}
