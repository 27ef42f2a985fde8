//! Endless symbol stream: randomly chosen sequences separated by noise.
//!
//! Each pass picks a sequence uniformly, emits its elements and then one
//! noise symbol. Nothing marks where a sequence starts or ends.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::config::{DiscreteConfig, NoiseMode};
use crate::error::Result;
use crate::rng::{self, streams, Rng};
use crate::symbol::Symbol;

use super::dataset::HighOrderDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamItem {
    pub index: usize,
    pub symbol: Symbol,
    /// Sequence id and position, or `None` for a separator.
    pub seq: Option<(usize, usize)>,
    pub is_end: bool,
    /// This position of the sequence was replaced by temporal noise.
    pub corrupted: bool,
}

/// Noise symbols drawn without replacement until the pool is used up, then
/// with replacement.
#[derive(Debug, Clone)]
pub struct NoisePool {
    order: Vec<u32>,
    next: usize,
    rng: Rng,
}

impl NoisePool {
    pub fn new(size: usize, seed: u64) -> Self {
        let mut rng = rng::child(seed, streams::NOISE_POOL);
        let mut order: Vec<u32> = (0..size as u32).collect();
        order.shuffle(&mut rng);
        NoisePool { order, next: 0, rng }
    }

    pub fn draw(&mut self) -> Symbol {
        let id = if self.next < self.order.len() {
            self.next += 1;
            self.order[self.next - 1]
        } else {
            self.order[self.rng.gen_range(0..self.order.len())]
        };
        Symbol::Noise(id)
    }
}

/// Stream settings taken from a run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub seed: u64,
    pub noise_pool: usize,
    pub swap_at: Option<usize>,
    pub noise_mode: NoiseMode,
    pub noise_after: usize,
    pub noise_probability: f64,
}

impl StreamConfig {
    pub fn from_discrete(d: &DiscreteConfig, seed: u64) -> Self {
        StreamConfig {
            seed,
            noise_pool: d.noise_pool,
            swap_at: d.swap_at,
            noise_mode: d.temporal_noise.mode,
            noise_after: d.temporal_noise.after,
            noise_probability: d.temporal_noise.probability,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SymbolStream {
    cfg: StreamConfig,
    data: HighOrderDataset,
    swapped: Option<HighOrderDataset>,
    choice: Rng,
    temporal: Rng,
    noise: NoisePool,
    index: usize,
    current: Vec<Symbol>,
    corrupt_at: Option<usize>,
    seq_id: usize,
    pos: usize,
    did_swap: bool,
}

impl SymbolStream {
    pub fn new(data: HighOrderDataset, cfg: StreamConfig) -> Result<Self> {
        let swapped = match cfg.swap_at {
            Some(_) => Some(data.swap_endings()?),
            None => None,
        };
        Ok(SymbolStream {
            choice: rng::child(cfg.seed, streams::SEQUENCE_CHOICE),
            temporal: rng::child(cfg.seed, streams::TEMPORAL_NOISE),
            noise: NoisePool::new(cfg.noise_pool, cfg.seed),
            cfg,
            data,
            swapped,
            index: 0,
            current: Vec::new(),
            corrupt_at: None,
            seq_id: 0,
            pos: 0,
            did_swap: false,
        })
    }

    /// The dataset sequences are currently drawn from.
    pub fn dataset(&self) -> &HighOrderDataset {
        &self.data
    }

    pub fn position(&self) -> usize {
        self.index
    }

    /// Whether the swapped dataset has taken over.
    pub fn swapped(&self) -> bool {
        self.did_swap
    }

    /// Whether temporal noise applies to a sequence starting at `start`.
    pub fn noisy(&self, start: usize) -> bool {
        match self.cfg.noise_mode {
            NoiseMode::Off => false,
            NoiseMode::FromStart => true,
            NoiseMode::After => start >= self.cfg.noise_after,
        }
    }

    fn begin_sequence(&mut self) {
        if let (Some(at), false) = (self.cfg.swap_at, self.did_swap) {
            if self.index >= at {
                std::mem::swap(&mut self.data, self.swapped.as_mut().expect("swap prepared"));
                self.did_swap = true;
            }
        }
        self.seq_id = self.choice.gen_range(0..self.data.len());
        self.current = self.data.sequences[self.seq_id].clone();
        self.pos = 0;
        self.corrupt_at = None;
        if self.noisy(self.index) && self.temporal.gen_bool(self.cfg.noise_probability) {
            // Second, third or fourth element, never the ending.
            let last = 3.min(self.current.len() - 2);
            self.corrupt_at = Some(self.temporal.gen_range(1..=last));
        }
    }
}

impl Iterator for SymbolStream {
    type Item = StreamItem;

    fn next(&mut self) -> Option<StreamItem> {
        if self.pos == 0 {
            self.begin_sequence();
        }
        let index = self.index;
        self.index += 1;
        let n = self.current.len();
        let item = if self.pos < n {
            let corrupted = self.corrupt_at == Some(self.pos);
            let symbol = if corrupted { self.noise.draw() } else { self.current[self.pos] };
            StreamItem {
                index,
                symbol,
                seq: Some((self.seq_id, self.pos)),
                is_end: self.pos == n - 1,
                corrupted,
            }
        } else {
            StreamItem { index, symbol: self.noise.draw(), seq: None, is_end: false, corrupted: false }
        };
        self.pos = (self.pos + 1) % (n + 1);
        Some(item)
    }
}
