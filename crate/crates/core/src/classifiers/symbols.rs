use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::sdr::Sdr;
use crate::symbol::Symbol;

/// Column SDRs of every symbol observed so far, in first-seen order.
///
/// An inverted index from column to entries lets a query touch only the
/// entries sharing a column with the prediction, which matters once tens
/// of thousands of noise symbols have been seen.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    width: usize,
    entries: Vec<(Symbol, Sdr)>,
    index: HashMap<Symbol, usize>,
    by_column: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ranked {
    pub symbol: Symbol,
    pub overlap: usize,
}

impl SymbolTable {
    pub fn new(width: usize) -> Self {
        SymbolTable {
            width,
            entries: Vec::new(),
            index: HashMap::new(),
            by_column: vec![Vec::new(); width],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn get(&self, symbol: Symbol) -> Option<&Sdr> {
        self.index.get(&symbol).map(|&i| &self.entries[i].1)
    }

    /// Records `symbol` on first sight; later inserts are ignored.
    pub fn insert(&mut self, symbol: Symbol, sdr: &Sdr) -> Result<()> {
        if sdr.width() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                actual: sdr.width(),
            });
        }
        if !self.index.contains_key(&symbol) {
            let id = self.entries.len();
            self.index.insert(symbol, id);
            for &b in sdr.active() {
                self.by_column[b as usize].push(id as u32);
            }
            self.entries.push((symbol, sdr.clone()));
        }
        Ok(())
    }

    fn check(&self, predicted: &Sdr, k: usize) -> Result<()> {
        if predicted.width() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                actual: predicted.width(),
            });
        }
        if k == 0 {
            return Err(Error::param("classify.k", "must be at least 1"));
        }
        Ok(())
    }

    /// Symbols ranked by overlap with `predicted`, highest first; ties keep
    /// first-seen order. Returns at most `k` entries.
    pub fn classify_topk(&self, predicted: &Sdr, k: usize) -> Result<Vec<Ranked>> {
        self.check(predicted, k)?;
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for &b in predicted.active() {
            for &id in &self.by_column[b as usize] {
                *counts.entry(id).or_default() += 1;
            }
        }
        let mut hits: Vec<(u32, usize)> = counts.into_iter().collect();
        hits.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        let mut out: Vec<Ranked> = hits
            .iter()
            .map(|&(id, overlap)| Ranked { symbol: self.entries[id as usize].0, overlap })
            .collect();
        if out.len() < k {
            // Pad with zero-overlap entries in first-seen order.
            let mut taken: Vec<u32> = hits.iter().map(|h| h.0).collect();
            taken.sort_unstable();
            let rest = (0..self.entries.len() as u32)
                .filter(|id| taken.binary_search(id).is_err())
                .take(k - out.len());
            out.extend(rest.map(|id| Ranked { symbol: self.entries[id as usize].0, overlap: 0 }));
        }
        Ok(out)
    }

    /// Same ranking as [`SymbolTable::classify_topk`] by scanning every
    /// entry, optionally in parallel.
    pub fn classify_topk_with(&self, predicted: &Sdr, k: usize, exec: Exec) -> Result<Vec<Ranked>> {
        self.check(predicted, k)?;
        let dense = predicted.to_dense();
        let overlaps: Vec<usize> = if exec.is_parallel() && self.entries.len() >= 4096 {
            exec.map(&self.entries, |(_, s)| s.active().iter().filter(|&&b| dense[b as usize]).count())
        } else {
            self.entries
                .iter()
                .map(|(_, s)| s.active().iter().filter(|&&b| dense[b as usize]).count())
                .collect()
        };
        let key = |&i: &usize| (std::cmp::Reverse(overlaps[i]), i);
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        if k < order.len() {
            order.select_nth_unstable_by_key(k, key);
            order.truncate(k);
        }
        order.sort_unstable_by_key(key);
        Ok(order
            .into_iter()
            .map(|i| Ranked {
                symbol: self.entries[i].0,
                overlap: overlaps[i],
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::CategoryEncoder;

    fn table(n: u32) -> (SymbolTable, CategoryEncoder) {
        let mut enc = CategoryEncoder::new(2048, 40, 17).unwrap();
        let mut t = SymbolTable::new(2048);
        for i in 0..n {
            let s = enc.encode(Symbol::Seq(i)).clone();
            t.insert(Symbol::Seq(i), &s).unwrap();
        }
        (t, enc)
    }

    #[test]
    fn exact_match_ranks_first() {
        let (t, enc) = table(10);
        let d = enc.peek(Symbol::Seq(3));
        let top = t.classify_topk(&d, 1).unwrap();
        assert_eq!(top, vec![Ranked { symbol: Symbol::Seq(3), overlap: 40 }]);
    }

    #[test]
    fn union_yields_both_members() {
        let (t, enc) = table(10);
        let u = Sdr::union([&enc.peek(Symbol::Seq(3)), &enc.peek(Symbol::Seq(7))]).unwrap();
        let top: Vec<Symbol> = t.classify_topk(&u, 2).unwrap().iter().map(|r| r.symbol).collect();
        assert!(top.contains(&Symbol::Seq(3)) && top.contains(&Symbol::Seq(7)));
    }

    #[test]
    fn empty_prediction_falls_back_to_insertion_order() {
        let (t, _) = table(5);
        let top = t.classify_topk(&Sdr::empty(2048).unwrap(), 3).unwrap();
        assert_eq!(
            top.iter().map(|r| (r.symbol, r.overlap)).collect::<Vec<_>>(),
            vec![(Symbol::Seq(0), 0), (Symbol::Seq(1), 0), (Symbol::Seq(2), 0)]
        );
        assert!(SymbolTable::new(2048).classify_topk(&Sdr::empty(2048).unwrap(), 2).unwrap().is_empty());
        assert_eq!(t.classify_topk(&Sdr::empty(2048).unwrap(), 99).unwrap().len(), 5);
    }

    #[test]
    fn table_keeps_first_insert() {
        let (mut t, _) = table(2);
        let other = Sdr::random(2048, 40, 1).unwrap();
        t.insert(Symbol::Seq(0), &other).unwrap();
        assert_ne!(t.get(Symbol::Seq(0)), Some(&other));
        assert_eq!(t.len(), 2);
        assert!(t.insert(Symbol::Seq(5), &Sdr::empty(10).unwrap()).is_err());
    }

    #[test]
    fn parallel_and_sequential_rankings_agree() {
        let (t, enc) = table(5000);
        let p = Sdr::union([&enc.peek(Symbol::Seq(10)), &enc.peek(Symbol::Seq(4000))]).unwrap();
        assert_eq!(
            t.classify_topk_with(&p, 20, Exec::Sequential).unwrap(),
            t.classify_topk_with(&p, 20, Exec::Parallel).unwrap()
        );
    }

    proptest::proptest! {
        #[test]
        fn indexed_ranking_matches_full_scan(n in 1u32..300, k in 1usize..12, seed in 0u64..1000, bits in 0usize..200) {
            let (t, _) = table(n);
            let p = Sdr::random(2048, bits, seed).unwrap();
            let scan = t.classify_topk_with(&p, k, Exec::Sequential).unwrap();
            proptest::prop_assert_eq!(t.classify_topk(&p, k).unwrap(), scan);
        }
    }
}
