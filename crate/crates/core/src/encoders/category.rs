use std::collections::HashMap;

use crate::error::Result;
use crate::rng;
use crate::sdr::Sdr;
use crate::symbol::Symbol;

/// Random SDR per symbol, drawn on first sight.
///
/// Each symbol's SDR is seeded from the encoder seed and the symbol's key,
/// so the mapping does not depend on the order symbols arrive in.
#[derive(Debug, Clone)]
pub struct CategoryEncoder {
    width: usize,
    num_active: usize,
    seed: u64,
    memo: HashMap<Symbol, Sdr>,
}

impl CategoryEncoder {
    pub fn new(width: usize, num_active: usize, seed: u64) -> Result<Self> {
        // Validates the geometry once.
        Sdr::random(width, num_active, seed)?;
        Ok(CategoryEncoder {
            width,
            num_active,
            seed,
            memo: HashMap::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_active(&self) -> usize {
        self.num_active
    }

    pub fn encode(&mut self, symbol: Symbol) -> &Sdr {
        let (w, n, seed) = (self.width, self.num_active, self.seed);
        self.memo
            .entry(symbol)
            .or_insert_with(|| draw(w, n, seed, symbol))
    }

    /// Encodes without touching the memo.
    pub fn peek(&self, symbol: Symbol) -> Sdr {
        self.memo
            .get(&symbol)
            .cloned()
            .unwrap_or_else(|| draw(self.width, self.num_active, self.seed, symbol))
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }
}

fn draw(width: usize, num_active: usize, seed: u64, symbol: Symbol) -> Sdr {
    let child = rng::derive_seed(rng::derive_seed(seed, rng::streams::CATEGORY), symbol.key());
    Sdr::random(width, num_active, child).expect("geometry validated in constructor")
}
