//! Tabular artifacts.
//!
//! `metrics.csv` columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `run_id` | run identifier |
//! | `model_id` | model index; an ensemble uses the model count |
//! | `iteration` | completed training iterations |
//! | `band`, `pose_mode` | evaluation cell; both empty on training rows |
//! | `success_rate` | fraction of successful episodes |
//! | `mean_discounted_return` | mean of Σ γᵗ rₜ over those episodes |
//! | `pool_size` | good-starts archive size after the iteration's barrier |
//! | `coverage_entropy` | grid entropy of that archive |
//! | `actor_loss`, `critic_loss`, `clip_fraction` | PPO statistics; empty on evaluation rows |
//!
//! Training rows describe the iteration's rollout batch; evaluation rows
//! describe deterministic (or, if configured, stochastic) grid evaluation.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::{Band, PoseMode, State};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub model_id: usize,
    pub iteration: usize,
    pub band: Option<Band>,
    pub pose_mode: Option<PoseMode>,
    pub success_rate: f64,
    pub mean_discounted_return: f64,
    pub pool_size: usize,
    pub coverage_entropy: f64,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub clip_fraction: Option<f64>,
}

impl MetricsRecord {
    pub fn is_eval(&self) -> bool {
        self.band.is_some()
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub(crate) fn write_metrics<W: Write>(writer: &mut csv::Writer<W>, rows: &[MetricsRecord]) -> Result<()> {
    for r in rows {
        writer.serialize(r)?;
    }
    Ok(())
}

/// One good start admitted to a pool. `pool_snapshots.csv` has columns
/// `model_id,iteration,r_hat,s0,s1,…`; iteration 0 rows are the goal seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSnapshotRow {
    pub model_id: usize,
    pub iteration: usize,
    /// Empty for goal seeds.
    pub r_hat: Option<f64>,
    pub state: State,
}

pub(crate) fn pool_header(state_dim: usize) -> Vec<String> {
    let mut h = vec!["model_id".to_string(), "iteration".into(), "r_hat".into()];
    h.extend((0..state_dim).map(|i| format!("s{i}")));
    h
}

pub(crate) fn write_pool_row<W: Write>(writer: &mut csv::Writer<W>, row: &PoolSnapshotRow) -> Result<()> {
    let mut rec = vec![
        row.model_id.to_string(),
        row.iteration.to_string(),
        row.r_hat.map(|r| r.to_string()).unwrap_or_default(),
    ];
    rec.extend(row.state.iter().map(|x| x.to_string()));
    writer.write_record(&rec)?;
    Ok(())
}

pub fn read_pool_snapshots<R: Read>(reader: R) -> Result<Vec<PoolSnapshotRow>> {
    let mut reader = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_err = |what: &str| Error::Config(format!("bad {what} in pool snapshot row {rec:?}"));
        let model_id = field(0).parse().map_err(|_| parse_err("model_id"))?;
        let iteration = field(1).parse().map_err(|_| parse_err("iteration"))?;
        let r_hat = match field(2) {
            "" => None,
            s => Some(s.parse().map_err(|_| parse_err("r_hat"))?),
        };
        let state = (3..rec.len())
            .map(|i| field(i).parse::<f64>().map_err(|_| parse_err("state")))
            .collect::<Result<State>>()?;
        out.push(PoolSnapshotRow {
            model_id,
            iteration,
            r_hat,
            state,
        });
    }
    Ok(out)
}
