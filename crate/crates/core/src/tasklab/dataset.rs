//! High-order sequence datasets with shared subsequences.
//!
//! A group of order `n` shares one middle subsequence of `n - 1` symbols
//! between two start symbols. Each start owns `endings` distinct ending
//! symbols, so every sequence is `start, middle.., ending` (length `n + 1`)
//! and predicting the ending needs the start, `n` steps back.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::symbol::Symbol;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub order: usize,
    /// Sequence indices: the first start's endings, then the second's.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighOrderDataset {
    pub sequences: Vec<Vec<Symbol>>,
    pub groups: Vec<Group>,
    pub endings: usize,
}

const STARTS_PER_GROUP: usize = 2;

/// Unique sequence-symbol ids. Start and ending symbols are even, shared
/// middle symbols odd, so the two pools never mix.
struct Alphabet {
    rng: Rng,
    used: HashSet<u32>,
}

impl Alphabet {
    fn draw(&mut self, parity: u32) -> Symbol {
        loop {
            let id = (self.rng.gen_range(0..1u32 << 29) << 1) | parity;
            if self.used.insert(id) {
                return Symbol::Seq(id);
            }
        }
    }

    fn terminal(&mut self) -> Symbol {
        self.draw(0)
    }

    fn middle(&mut self) -> Symbol {
        self.draw(1)
    }
}

/// One block of `groups` groups of the given order.
pub fn gen_dataset(order: usize, endings: usize, groups: usize, seed: u64) -> Result<HighOrderDataset> {
    gen_mixed(&[order], endings, groups, seed)
}

/// `groups` groups for each order in `orders`, all over one alphabet.
pub fn gen_mixed(orders: &[usize], endings: usize, groups: usize, seed: u64) -> Result<HighOrderDataset> {
    if orders.is_empty() || orders.iter().any(|&o| o < 2) {
        return Err(Error::param("dataset.order", "need orders >= 2"));
    }
    if ![1, 2, 4].contains(&endings) {
        return Err(Error::param("dataset.endings", "must be 1, 2 or 4"));
    }
    if groups == 0 {
        return Err(Error::param("dataset.groups", "must be positive"));
    }
    let mut abc = Alphabet { rng: rng::child(seed, rng::streams::DATASET), used: HashSet::new() };
    let mut ds = HighOrderDataset { sequences: Vec::new(), groups: Vec::new(), endings };
    for &order in orders {
        for _ in 0..groups {
            let middle: Vec<Symbol> = (0..order - 1).map(|_| abc.middle()).collect();
            let mut members = Vec::new();
            for _ in 0..STARTS_PER_GROUP {
                let start = abc.terminal();
                for _ in 0..endings {
                    let mut seq = Vec::with_capacity(order + 1);
                    seq.push(start);
                    seq.extend_from_slice(&middle);
                    seq.push(abc.terminal());
                    members.push(ds.sequences.len());
                    ds.sequences.push(seq);
                }
            }
            ds.groups.push(Group { order, members });
        }
    }
    Ok(ds)
}

impl HighOrderDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Every distinct symbol, in first-appearance order.
    pub fn alphabet(&self) -> Vec<Symbol> {
        let mut seen = HashSet::new();
        self.sequences.iter().flatten().copied().filter(|s| seen.insert(*s)).collect()
    }

    /// Exchanges the endings of the two starts in every group: member `k`
    /// swaps its last symbol with member `k + endings`. Applying it twice
    /// restores the dataset.
    pub fn swap_endings(&self) -> Result<HighOrderDataset> {
        let mut out = self.clone();
        for (g, group) in self.groups.iter().enumerate() {
            if group.members.len() % 2 != 0 {
                return Err(Error::param("dataset.groups", format!("group {g} has an odd number of sequences")));
            }
            let half = group.members.len() / 2;
            for k in 0..half {
                let (a, b) = (group.members[k], group.members[k + half]);
                let ea = *self.sequences[a].last().expect("nonempty");
                let eb = *self.sequences[b].last().expect("nonempty");
                *out.sequences[a].last_mut().expect("nonempty") = eb;
                *out.sequences[b].last_mut().expect("nonempty") = ea;
            }
        }
        Ok(out)
    }
}
