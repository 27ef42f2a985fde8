//! Experiment harness: stream generation and the online evaluation loops.

pub mod dataset;
pub mod discrete;
pub mod scalar;
pub mod stream;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TaskKind};
use crate::error::{Error, Result};

pub use dataset::{gen_dataset, gen_mixed, Group, HighOrderDataset};
pub use discrete::{
    run_discrete, run_replicas, DiscreteCheckpoint, DiscreteModel, DiscreteRun, DiscreteSummary, KillResult,
};
pub use scalar::{run_taxi, series_for, TaxiCheckpoint, TaxiModel, TaxiRun, TaxiSummary};
pub use stream::{NoisePool, StreamConfig, StreamItem, SymbolStream};

fn is_false(b: &bool) -> bool {
    !*b
}

/// One line of run output. Discrete runs fill the symbol fields, scalar
/// runs the value fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub is_end: bool,
    /// Predicted endings, best first, made before the ending was shown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topk: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    /// Moving accuracy over recent sequence endings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Point forecast for `lookahead` rows ahead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Vec<f64>>,
    /// Trailing-window MAPE and NLL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nll: Option<f64>,
}

impl StepRecord {
    pub fn new(index: usize) -> Self {
        StepRecord {
            index,
            symbol: None,
            is_end: false,
            topk: None,
            correct: None,
            accuracy: None,
            timestamp: None,
            value: None,
            prediction: None,
            distribution: None,
            mape: None,
            nll: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Summary {
    Discrete(DiscreteSummary),
    Taxi(TaxiSummary),
}

pub const CHECKPOINT_FORMAT: &str = "seqmem-run";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum CheckpointBody {
    Discrete(DiscreteCheckpoint),
    Taxi(TaxiCheckpoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub body: CheckpointBody,
}

/// A run of either task, stepped one element at a time.
#[derive(Debug, Clone)]
pub enum Run {
    Discrete(Box<DiscreteRun>),
    Taxi(Box<TaxiRun>),
}

impl Run {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(match cfg.task {
            TaskKind::Discrete => Run::Discrete(Box::new(DiscreteRun::new(cfg)?)),
            TaskKind::Taxi => Run::Taxi(Box::new(TaxiRun::new(cfg)?)),
        })
    }

    pub fn config(&self) -> &RunConfig {
        match self {
            Run::Discrete(r) => r.config(),
            Run::Taxi(r) => r.config(),
        }
    }

    pub fn position(&self) -> usize {
        match self {
            Run::Discrete(r) => r.position(),
            Run::Taxi(r) => r.position(),
        }
    }

    pub fn is_done(&self) -> bool {
        match self {
            Run::Discrete(r) => r.is_done(),
            Run::Taxi(r) => r.is_done(),
        }
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        match self {
            Run::Discrete(r) => r.step(),
            Run::Taxi(r) => r.step(),
        }
    }

    /// Summary of the run so far. For discrete runs with a kill schedule
    /// this also runs the fault-injection sweep.
    pub fn summary(&self, exec: crate::exec::Exec) -> Result<Summary> {
        Ok(match self {
            Run::Discrete(r) => {
                let mut s = r.summary();
                if let Some(k) = &r.config().discrete.kill {
                    s.kill = Some(r.fault_injection(&k.fractions, k.eval_elements, exec)?);
                }
                Summary::Discrete(s)
            }
            Run::Taxi(r) => Summary::Taxi(r.summary()?),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let body = match self {
            Run::Discrete(r) => CheckpointBody::Discrete(r.checkpoint()),
            Run::Taxi(r) => CheckpointBody::Taxi(r.checkpoint()),
        };
        Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, body }
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::Snapshot(format!("not a run checkpoint (format {:?})", cp.format)));
        }
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Snapshot(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        Ok(match &cp.body {
            CheckpointBody::Discrete(d) => Run::Discrete(Box::new(DiscreteRun::from_checkpoint(d)?)),
            CheckpointBody::Taxi(t) => Run::Taxi(Box::new(TaxiRun::from_checkpoint(t)?)),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, &self.checkpoint())?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    /// Loads and validates a checkpoint; nothing is returned on error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cp: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint(&cp)
    }
}
