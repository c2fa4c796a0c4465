use std::io::Write;
use std::path::Path;

use crate::envs::{Band, EvalBand, PoseMode};
use crate::error::{Error, Result};
use crate::parallel::Strategy;

use super::config::ExperimentConfig;
use super::run::run;

/// Final Far/Variable success of one configuration across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct KSearchRow {
    /// "PRCG" rows carry their exchange rate; the baseline has none.
    pub label: String,
    pub k: Option<usize>,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

impl KSearchRow {
    fn new(label: String, k: Option<usize>, per_seed: Vec<f64>) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std = if per_seed.len() > 1 {
            (per_seed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            label,
            k,
            per_seed,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSearchSummary {
    /// One row per k, in the order given.
    pub rows: Vec<KSearchRow>,
    pub baseline: KSearchRow,
}

impl KSearchSummary {
    pub fn row(&self, k: usize) -> Option<&KSearchRow> {
        self.rows.iter().find(|r| r.k == Some(k))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["label", "k", "mean", "std", "seeds", "per_seed"])?;
        for r in self.rows.iter().chain(std::iter::once(&self.baseline)) {
            let per: Vec<String> = r.per_seed.iter().map(|x| x.to_string()).collect();
            w.write_record([
                r.label.clone(),
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                r.mean.to_string(),
                r.std.to_string(),
                r.per_seed.len().to_string(),
                per.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const TARGET: EvalBand = EvalBand::new(Band::Far, PoseMode::Variable);

/// Trains the critic-swap strategy for every (k, seed) and the independent
/// baseline for every seed, each for `iterations`, under `out_dir/k<k>/seed<s>`
/// and `out_dir/baseline/seed<s>`. The summary is also written to
/// `out_dir/ksearch_summary.csv`.
pub fn k_search(
    template: &ExperimentConfig,
    k_values: &[usize],
    iterations: usize,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<KSearchSummary> {
    if k_values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("k_search needs at least one k value and one seed".into()));
    }
    let trial = |strategy: Strategy, k: usize, seed: u64, dir: &Path| -> Result<f64> {
        let mut c = template.clone();
        c.algorithm.strategy = strategy;
        c.algorithm.k = k;
        c.run.total_iterations = iterations;
        c.run.master_seed = seed;
        c.run.output_dir = dir.to_path_buf();
        let artifacts = run(&c)?;
        artifacts
            .outcome
            .final_eval
            .iter()
            .find(|r| r.band == Some(TARGET.band) && r.pose_mode == Some(TARGET.pose_mode))
            .map(|r| r.success_rate)
            .ok_or_else(|| Error::Usage("final evaluation lacks the Far/Variable cell".into()))
    };

    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let per_seed = seeds
            .iter()
            .map(|&s| trial(Strategy::SwapCritics, k, s, &out_dir.join(format!("k{k}")).join(format!("seed{s}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(KSearchRow::new(format!("{} k={k}", Strategy::SwapCritics.label()), Some(k), per_seed));
    }
    let per_seed = seeds
        .iter()
        .map(|&s| trial(Strategy::NoExchange, template.algorithm.k, s, &out_dir.join("baseline").join(format!("seed{s}"))))
        .collect::<Result<Vec<_>>>()?;
    let baseline = KSearchRow::new(Strategy::NoExchange.label().to_string(), None, per_seed);
    let summary = KSearchSummary { rows, baseline };
    summary.write_csv(std::fs::File::create(out_dir.join("ksearch_summary.csv"))?)?;
    Ok(summary)
}
