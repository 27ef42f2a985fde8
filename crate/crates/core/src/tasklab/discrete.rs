//! Online evaluation on the high-order symbol stream.
//!
//! At each sequence ending the top-K symbols are read from the columns the
//! network predicts, before the ending is shown. Learning never stops and
//! nothing tells the model where sequences begin or end.

use serde::{Deserialize, Serialize};

use crate::classifiers::{Ranked, SymbolTable};
use crate::config::RunConfig;
use crate::encoders::CategoryEncoder;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{self, streams};
use crate::symbol::Symbol;
use crate::tm::TemporalMemory;

use super::dataset::{gen_mixed, HighOrderDataset};
use super::stream::{StreamConfig, StreamItem, SymbolStream};
use super::StepRecord;

/// Encoder, temporal memory and overlap decoder.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub encoder: CategoryEncoder,
    pub tm: TemporalMemory,
    pub table: SymbolTable,
}

impl DiscreteModel {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let d = &cfg.discrete;
        Ok(DiscreteModel {
            encoder: CategoryEncoder::new(
                d.encoder_width,
                d.encoder_active,
                rng::derive_seed(cfg.seed, streams::CATEGORY),
            )?,
            tm: TemporalMemory::new(cfg.tm_params())?,
            table: SymbolTable::new(d.encoder_width),
        })
    }

    /// Up to `k` symbols whose columns overlap the current prediction.
    pub fn predict(&self, k: usize) -> Result<Vec<Ranked>> {
        let predicted = self.tm.predicted_columns();
        if predicted.is_empty() || self.table.is_empty() {
            return Ok(Vec::new());
        }
        let mut top = self.table.classify_topk(&predicted, k)?;
        top.retain(|r| r.overlap > 0);
        Ok(top)
    }

    /// Feeds one symbol and records it in the decoder table.
    pub fn observe(&mut self, symbol: Symbol, learn: bool) -> Result<()> {
        let sdr = self.encoder.encode(symbol).clone();
        self.tm.step(&sdr, learn)?;
        self.table.insert(symbol, &sdr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapSummary {
    /// First element drawn from the swapped dataset.
    pub start: usize,
    pub accuracy_before: f64,
    pub min_accuracy: f64,
    /// Elements and sequences after `start` until the moving accuracy is
    /// back at the recovery level.
    pub elements_to_recover: Option<usize>,
    pub sequences_to_recover: Option<usize>,
    /// Sequences the untrained model needed to first reach that level.
    pub initial_sequences_to_level: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub start: usize,
    /// Hit rate over the endings before noise started.
    pub accuracy_before: Option<f64>,
    /// Hit rate over the second half of the noisy span.
    pub steady_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KillResult {
    pub fraction: f64,
    pub killed: usize,
    pub accuracy: f64,
    /// Accuracy without damage minus accuracy at this fraction.
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSummary {
    pub seed: u64,
    pub elements: usize,
    pub sequences: usize,
    /// Final moving accuracy over the last `accuracy_window` sequences.
    pub accuracy_ma100: f64,
    pub elements_to_threshold: Option<usize>,
    pub sequences_to_threshold: Option<usize>,
    pub swap: Option<SwapSummary>,
    pub noise: Option<NoiseSummary>,
    pub kill: Option<Vec<KillResult>>,
}

/// Resumable state of a discrete run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCheckpoint {
    pub config: RunConfig,
    pub position: usize,
    pub tm: String,
    /// Decoder table symbols in insertion order.
    pub table: Vec<Symbol>,
    pub correct: Vec<bool>,
    pub end_index: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DiscreteRun {
    cfg: RunConfig,
    model: DiscreteModel,
    stream: SymbolStream,
    k: usize,
    learn: bool,
    /// Per sequence ending: hit or miss, and the element index.
    correct: Vec<bool>,
    end_index: Vec<usize>,
    window_hits: usize,
    swap_start: Option<usize>,
    noise_start: Option<usize>,
}

pub fn dataset_for(cfg: &RunConfig) -> Result<HighOrderDataset> {
    let d = &cfg.discrete;
    gen_mixed(&d.orders, d.endings, d.groups_per_order, cfg.seed)
}

impl DiscreteRun {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let ds = dataset_for(cfg)?;
        let stream = SymbolStream::new(ds, StreamConfig::from_discrete(&cfg.discrete, cfg.seed))?;
        Ok(DiscreteRun {
            model: DiscreteModel::new(cfg)?,
            k: cfg.discrete.top_k(),
            cfg: cfg.clone(),
            stream,
            learn: true,
            correct: Vec::new(),
            end_index: Vec::new(),
            window_hits: 0,
            swap_start: None,
            noise_start: None,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn model(&self) -> &DiscreteModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut DiscreteModel {
        &mut self.model
    }

    pub fn position(&self) -> usize {
        self.stream.position()
    }

    pub fn is_done(&self) -> bool {
        self.position() >= self.cfg.discrete.elements
    }

    pub fn set_learning(&mut self, on: bool) {
        self.learn = on;
    }

    /// Hit or miss at each sequence ending so far.
    pub fn hits(&self) -> &[bool] {
        &self.correct
    }

    pub fn end_indices(&self) -> &[usize] {
        &self.end_index
    }

    fn track(&mut self, item: &StreamItem) {
        if item.seq.map(|s| s.1) == Some(0) {
            if self.swap_start.is_none() && self.stream.swapped() {
                self.swap_start = Some(item.index);
            }
            if self.noise_start.is_none() && self.stream.noisy(item.index) {
                self.noise_start = Some(item.index);
            }
        }
    }

    fn score(&mut self, hit: bool, index: usize) -> f64 {
        let w = self.cfg.discrete.accuracy_window;
        self.correct.push(hit);
        self.end_index.push(index);
        self.window_hits += hit as usize;
        let n = self.correct.len();
        if n > w {
            self.window_hits -= self.correct[n - 1 - w] as usize;
        }
        self.window_hits as f64 / n.min(w) as f64
    }

    /// Presents the next element, scoring it first if it ends a sequence.
    pub fn step(&mut self) -> Result<StepRecord> {
        let item = self.stream.next().expect("stream is endless");
        self.track(&item);
        let mut rec = StepRecord::new(item.index);
        rec.symbol = Some(item.symbol.to_string());
        rec.is_end = item.is_end;
        if item.is_end {
            let top = self.model.predict(self.k)?;
            let hit = top.iter().any(|r| r.symbol == item.symbol);
            rec.topk = Some(top.iter().map(|r| r.symbol.to_string()).collect());
            rec.correct = Some(hit);
            rec.accuracy = Some(self.score(hit, item.index));
        }
        self.model.observe(item.symbol, self.learn)?;
        Ok(rec)
    }

    /// Steps until the element budget is used, handing each record to
    /// `sink`.
    pub fn run_to_end(&mut self, mut sink: impl FnMut(&StepRecord) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let rec = self.step()?;
            sink(&rec)?;
        }
        Ok(())
    }

    /// Moving accuracy after the latest ending.
    pub fn accuracy(&self) -> f64 {
        let n = self.correct.len();
        if n == 0 {
            return 0.0;
        }
        self.window_hits as f64 / n.min(self.cfg.discrete.accuracy_window) as f64
    }

    /// Summary of the run so far; kill results are left empty.
    pub fn summary(&self) -> DiscreteSummary {
        let d = &self.cfg.discrete;
        let ma = crate::metrics::moving_accuracy(&self.correct, d.accuracy_window);
        let full = d.accuracy_window.saturating_sub(1);
        let first_at = |level: f64, from: usize| (from.max(full)..ma.len()).find(|&i| ma[i] >= level);
        let reach = first_at(d.threshold, 0);

        let swap = self.swap_start.map(|start| {
            let first = self.end_index.partition_point(|&e| e < start);
            let before = first.checked_sub(1).map(|i| ma[i]).unwrap_or(0.0);
            let (low, low_at) = ma[first..]
                .iter()
                .enumerate()
                .fold((f64::INFINITY, first), |(m, at), (i, &v)| if v < m { (v, first + i) } else { (m, at) });
            let back = (low_at..ma.len()).find(|&i| ma[i] >= d.recovery_threshold);
            SwapSummary {
                start,
                accuracy_before: before,
                min_accuracy: if low.is_finite() { low } else { before },
                elements_to_recover: back.map(|i| self.end_index[i] - start),
                sequences_to_recover: back.map(|i| i + 1 - first),
                initial_sequences_to_level: first_at(d.recovery_threshold, 0).filter(|&i| i < first).map(|i| i + 1),
            }
        });

        let noise = self.noise_start.map(|start| {
            let first = self.end_index.partition_point(|&e| e < start);
            let rate = |s: &[bool]| (!s.is_empty()).then(|| s.iter().filter(|&&c| c).count() as f64 / s.len() as f64);
            let mid = first + (self.correct.len() - first) / 2;
            NoiseSummary {
                start,
                accuracy_before: rate(&self.correct[..first]),
                steady_accuracy: rate(&self.correct[mid..]),
            }
        });

        DiscreteSummary {
            seed: self.cfg.seed,
            elements: self.position(),
            sequences: self.correct.len(),
            accuracy_ma100: self.accuracy(),
            elements_to_threshold: reach.map(|i| self.end_index[i] + 1),
            sequences_to_threshold: reach.map(|i| i + 1),
            swap,
            noise,
            kill: None,
        }
    }

    /// Damages a copy of the trained model for each fraction and measures
    /// hit rate over the next `eval_elements` elements with learning off.
    /// Every fraction sees the same continuation of the stream.
    pub fn fault_injection(&self, fractions: &[f64], eval_elements: usize, exec: Exec) -> Result<Vec<KillResult>> {
        let results = exec
            .map(fractions, |&f| self.frozen_accuracy(f, eval_elements))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let base = match fractions.iter().position(|&f| f == 0.0) {
            Some(i) => results[i].1,
            None => self.frozen_accuracy(0.0, eval_elements)?.1,
        };
        Ok(fractions
            .iter()
            .zip(results)
            .map(|(&fraction, (killed, accuracy))| KillResult { fraction, killed, accuracy, drop: base - accuracy })
            .collect())
    }

    fn frozen_accuracy(&self, fraction: f64, eval_elements: usize) -> Result<(usize, f64)> {
        let mut run = self.clone();
        run.set_learning(false);
        let kill_seed = rng::derive_seed(self.cfg.seed, streams::KILL ^ fraction.to_bits());
        let killed = run.model.tm.kill_cells(fraction, kill_seed)?;
        let (start, stop) = (run.correct.len(), run.position() + eval_elements);
        while run.position() < stop {
            run.step()?;
        }
        let hits = &run.correct[start..];
        Ok((killed, hits.iter().filter(|&&c| c).count() as f64 / hits.len().max(1) as f64))
    }

    pub fn checkpoint(&self) -> DiscreteCheckpoint {
        DiscreteCheckpoint {
            config: self.cfg.clone(),
            position: self.position(),
            tm: self.model.tm.to_snapshot(),
            table: self.model.table.symbols().collect(),
            correct: self.correct.clone(),
            end_index: self.end_index.clone(),
        }
    }

    /// Rebuilds a run from a checkpoint. The stream is regenerated from the
    /// config and fast-forwarded, so the continuation matches an unbroken
    /// run exactly.
    pub fn from_checkpoint(cp: &DiscreteCheckpoint) -> Result<Self> {
        let mut run = DiscreteRun::new(&cp.config)?;
        if cp.correct.len() != cp.end_index.len() {
            return Err(Error::Snapshot("hit and ending-index lists differ in length".into()));
        }
        while run.position() < cp.position {
            let item = run.stream.next().expect("stream is endless");
            run.track(&item);
        }
        let tm = TemporalMemory::from_snapshot(&cp.tm)?;
        if tm.params() != run.model.tm.params() {
            return Err(Error::Snapshot("network parameters do not match the config".into()));
        }
        run.model.tm = tm;
        for &s in &cp.table {
            let sdr = run.model.encoder.encode(s).clone();
            run.model.table.insert(s, &sdr)?;
        }
        for (&hit, &at) in cp.correct.iter().zip(&cp.end_index) {
            run.score(hit, at);
        }
        Ok(run)
    }
}

/// Full discrete protocol for one config: the main run, then the optional
/// fault-injection sweep.
pub fn run_discrete(
    cfg: &RunConfig,
    exec: Exec,
    sink: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<(DiscreteRun, DiscreteSummary)> {
    let mut run = DiscreteRun::new(cfg)?;
    run.run_to_end(sink)?;
    let mut summary = run.summary();
    if let Some(k) = &cfg.discrete.kill {
        summary.kill = Some(run.fault_injection(&k.fractions, k.eval_elements, exec)?);
    }
    Ok((run, summary))
}

/// `k` seeded replicas of one config, run side by side.
pub fn run_replicas(cfg: &RunConfig, k: usize, exec: Exec) -> Result<Vec<DiscreteSummary>> {
    exec.map_range(k, |i| run_discrete(&cfg.replica(i), Exec::Sequential, |_| Ok(())).map(|r| r.1))
        .into_iter()
        .collect()
}
