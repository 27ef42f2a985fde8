//! Temporal memory: columns of cells with distal dendritic segments.
//!
//! Each step runs three phases:
//!
//! 1. **Activation.** In every winning column, cells that were predictive
//!    become active and are the column's winners. A column with no
//!    predictive cell bursts: all of its live cells fire and one winner is
//!    picked, either the owner of the best matching segment or the least
//!    used cell.
//! 2. **Learning.** Segments that correctly predicted are reinforced
//!    against the previous active cells. In bursting columns the best
//!    matching segment is reinforced and grown, or a new segment is created
//!    on the winner and sampled from the previous winners. Segments that
//!    predicted a cell that stayed silent are decayed.
//! 3. **Prediction.** A segment is active when at least
//!    `activation_threshold` of its connected synapses come from active
//!    cells; its owner becomes predictive for the next step.

mod connections;
mod params;
mod snapshot;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use connections::SegmentRef;
use connections::{Connections, SegIdx};
pub use params::{from_fixed, to_fixed, Permanence, TmParams, PERMANENCE_MAX, PERMANENCE_SCALE};
use params::FixedRates;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::sdr::{sorted_intersection_count, Sdr};

/// Flat cell index: `column * cells_per_column + cell`.
pub type CellIdx = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub column: u32,
    pub cell: u32,
}

/// Network state after one step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TmState {
    pub timestep: u64,
    pub active_columns: Vec<u32>,
    pub active_cells: Vec<CellIdx>,
    pub winner_cells: Vec<CellIdx>,
    pub predictive_cells: Vec<CellIdx>,
    pub bursting_columns: Vec<u32>,
    pub num_active_segments: usize,
    pub num_matching_segments: usize,
}

/// Result of evaluating distal segments against a set of active cells.
#[derive(Debug, Clone, Default)]
pub struct Prediction {
    pub predictive_cells: Vec<CellIdx>,
    /// Active segments in `(owner, created)` order.
    pub active_segments: Vec<SegmentRef>,
    /// Matching segments and their active potential-synapse counts.
    pub matching_segments: Vec<(SegmentRef, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LearnAction {
    /// Correctly predicted: reinforce.
    Reinforce(SegmentRef),
    /// Bursting with a match: reinforce, then grow toward the winner set.
    ReinforceAndGrow(SegmentRef, u32),
    /// Bursting without a match: new segment on this cell.
    Create(CellIdx),
}

/// Outcome of the activation phase, consumed by [`TemporalMemory::learn`].
#[derive(Debug, Clone, Default)]
pub struct Activation {
    pub active_columns: Vec<u32>,
    pub active_cells: Vec<CellIdx>,
    pub winner_cells: Vec<CellIdx>,
    pub bursting_columns: Vec<u32>,
    actions: Vec<LearnAction>,
}

/// Read-only view of a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentView {
    pub owner: CellIdx,
    pub created: u64,
    pub last_active: u64,
    pub synapses: Vec<(CellIdx, Permanence)>,
}

#[derive(Debug, Clone)]
pub struct TemporalMemory {
    params: TmParams,
    rates: FixedRates,
    conn: Connections,
    dead: Vec<bool>,
    num_dead: usize,
    timestep: u64,
    active_columns: Vec<u32>,
    active_cells: Vec<CellIdx>,
    winner_cells: Vec<CellIdx>,
    bursting_columns: Vec<u32>,
    prediction: Prediction,
    // scratch counters indexed by segment slot
    connected_count: Vec<u32>,
    potential_count: Vec<u32>,
}

impl TemporalMemory {
    pub fn new(params: TmParams) -> Result<Self> {
        params.validate()?;
        let n = params.num_cells();
        Ok(TemporalMemory {
            rates: FixedRates::new(&params),
            conn: Connections::new(n),
            dead: vec![false; n],
            num_dead: 0,
            timestep: 0,
            active_columns: Vec::new(),
            active_cells: Vec::new(),
            winner_cells: Vec::new(),
            bursting_columns: Vec::new(),
            prediction: Prediction::default(),
            connected_count: Vec::new(),
            potential_count: Vec::new(),
            params,
        })
    }

    pub fn params(&self) -> &TmParams {
        &self.params
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn num_cells(&self) -> usize {
        self.params.num_cells()
    }

    pub fn num_segments(&self) -> usize {
        self.conn.num_segments()
    }

    pub fn num_synapses(&self) -> usize {
        self.conn.num_synapses()
    }

    pub fn num_dead(&self) -> usize {
        self.num_dead
    }

    pub fn is_dead(&self, cell: CellIdx) -> bool {
        self.dead[cell as usize]
    }

    pub fn cell_id(&self, cell: CellIdx) -> CellId {
        let m = self.params.cells_per_column as u32;
        CellId {
            column: cell / m,
            cell: cell % m,
        }
    }

    pub fn cell_index(&self, id: CellId) -> Result<CellIdx> {
        if id.column as usize >= self.params.num_columns || id.cell as usize >= self.params.cells_per_column {
            return Err(Error::OutOfRange {
                index: id.column as usize * self.params.cells_per_column + id.cell as usize,
                limit: self.num_cells(),
            });
        }
        Ok(id.column * self.params.cells_per_column as u32 + id.cell)
    }

    fn column_of(&self, cell: CellIdx) -> u32 {
        cell / self.params.cells_per_column as u32
    }

    pub fn state(&self) -> TmState {
        TmState {
            timestep: self.timestep,
            active_columns: self.active_columns.clone(),
            active_cells: self.active_cells.clone(),
            winner_cells: self.winner_cells.clone(),
            predictive_cells: self.prediction.predictive_cells.clone(),
            bursting_columns: self.bursting_columns.clone(),
            num_active_segments: self.prediction.active_segments.len(),
            num_matching_segments: self.prediction.matching_segments.len(),
        }
    }

    pub fn active_cells(&self) -> &[CellIdx] {
        &self.active_cells
    }

    pub fn winner_cells(&self) -> &[CellIdx] {
        &self.winner_cells
    }

    pub fn predictive_cells(&self) -> &[CellIdx] {
        &self.prediction.predictive_cells
    }

    /// Active cells as an SDR over the whole cell space.
    pub fn active_cells_sdr(&self) -> Sdr {
        Sdr::from_sorted_unchecked(self.num_cells(), self.active_cells.clone())
    }

    /// Columns containing at least one predictive cell.
    pub fn predicted_columns(&self) -> Sdr {
        predicted_columns(&self.prediction.predictive_cells, &self.params)
    }

    /// All live segments in creation order.
    pub fn segments(&self) -> Vec<SegmentView> {
        self.conn
            .iter_live()
            .map(|(_, s)| SegmentView {
                owner: s.owner,
                created: s.created,
                last_active: s.last_active,
                synapses: s.synapses.iter().map(|y| (y.presyn, y.perm)).collect(),
            })
            .collect()
    }

    pub fn segments_per_cell(&self, cell: CellIdx) -> usize {
        self.conn.segments_of(cell).len()
    }

    pub fn segment(&self, r: SegmentRef) -> Option<SegmentView> {
        self.conn.get(r).map(|s| SegmentView {
            owner: s.owner,
            created: s.created,
            last_active: s.last_active,
            synapses: s.synapses.iter().map(|y| (y.presyn, y.perm)).collect(),
        })
    }

    /// Adds a segment with explicit synapses. Used to build fixtures and to
    /// restore snapshots; the usual path is learning.
    pub fn add_segment(&mut self, owner: CellIdx, synapses: &[(CellIdx, Permanence)]) -> Result<SegmentRef> {
        let n = self.num_cells() as u32;
        if owner >= n {
            return Err(Error::OutOfRange { index: owner as usize, limit: n as usize });
        }
        if self.dead[owner as usize] {
            return Err(Error::param("segment.owner", format!("cell {owner} is dead")));
        }
        if synapses.is_empty() || synapses.len() > self.params.max_synapses_per_segment {
            return Err(Error::param(
                "segment.synapses",
                format!("{} synapses, need 1..={}", synapses.len(), self.params.max_synapses_per_segment),
            ));
        }
        if self.conn.segments_of(owner).len() >= self.params.max_segments_per_cell {
            return Err(Error::param("segment.owner", format!("cell {owner} has no free segment slot")));
        }
        let mut sorted = synapses.to_vec();
        sorted.sort_unstable_by_key(|s| s.0);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::param("segment.synapses", format!("duplicate presynaptic cell {}", w[0].0)));
            }
        }
        for &(pre, perm) in &sorted {
            if pre >= n || pre == owner || self.dead[pre as usize] || perm == 0 || perm > PERMANENCE_MAX {
                return Err(Error::param(
                    "segment.synapses",
                    format!("invalid synapse {pre}:{perm} on cell {owner}"),
                ));
            }
        }
        let idx = self.conn.create_segment(owner, self.timestep);
        for (pre, perm) in sorted {
            self.conn.add_synapse(idx, pre, perm);
        }
        Ok(self.conn.reference(idx))
    }

    /// Sets the current active and winner cells and recomputes predictions,
    /// as if the last step had produced them.
    pub fn set_active_cells(&mut self, active: &[CellIdx], winners: &[CellIdx]) -> Result<()> {
        let n = self.num_cells() as u32;
        let norm = |v: &[CellIdx]| -> Result<Vec<CellIdx>> {
            let mut v = v.to_vec();
            v.sort_unstable();
            v.dedup();
            if let Some(&c) = v.iter().find(|&&c| c >= n) {
                return Err(Error::OutOfRange { index: c as usize, limit: n as usize });
            }
            Ok(v)
        };
        let active = norm(active)?;
        let winners = norm(winners)?;
        if winners.iter().any(|w| active.binary_search(w).is_err()) {
            return Err(Error::param("state.winner_cells", "winners must be active"));
        }
        self.active_columns = active.iter().map(|&c| self.column_of(c)).collect();
        self.active_columns.dedup();
        self.active_cells = active;
        self.winner_cells = winners;
        self.bursting_columns.clear();
        self.prediction = self.compute_predictive(&self.active_cells.clone());
        Ok(())
    }

    /// Evaluates every segment against `active_cells` (sorted).
    ///
    /// A segment is active when at least `activation_threshold` connected
    /// synapses (permanence >= connected threshold) come from active cells,
    /// and matching when at least `matching_threshold` positive-permanence
    /// synapses do. Owners of active segments are predictive.
    pub fn compute_predictive(&mut self, active_cells: &[CellIdx]) -> Prediction {
        let arena = self.conn.arena_len();
        if self.connected_count.len() < arena {
            self.connected_count.resize(arena, 0);
            self.potential_count.resize(arena, 0);
        }
        let connected = self.rates.connected;
        let mut touched: Vec<SegIdx> = Vec::new();
        for &cell in active_cells {
            for &seg in self.conn.segments_from(cell) {
                let s = seg as usize;
                if self.potential_count[s] == 0 {
                    touched.push(seg);
                }
                self.potential_count[s] += 1;
                if self.conn.permanence(seg, cell).unwrap_or(0) >= connected {
                    self.connected_count[s] += 1;
                }
            }
        }
        let theta = self.params.activation_threshold as u32;
        let theta_match = self.params.matching_threshold as u32;
        let mut active = Vec::new();
        let mut matching = Vec::new();
        for &seg in &touched {
            let s = seg as usize;
            if self.connected_count[s] >= theta {
                active.push(seg);
            }
            if self.potential_count[s] >= theta_match {
                matching.push((seg, self.potential_count[s]));
            }
        }
        for &seg in &touched {
            self.connected_count[seg as usize] = 0;
            self.potential_count[seg as usize] = 0;
        }
        let key = |idx: SegIdx| {
            let d = self.conn.seg(idx);
            (d.owner, d.created)
        };
        active.sort_unstable_by_key(|&i| key(i));
        matching.sort_unstable_by_key(|&(i, _)| key(i));
        let mut predictive: Vec<CellIdx> = active.iter().map(|&i| self.conn.seg(i).owner).collect();
        predictive.dedup();
        Prediction {
            predictive_cells: predictive,
            active_segments: active.iter().map(|&i| self.conn.reference(i)).collect(),
            matching_segments: matching
                .iter()
                .map(|&(i, n)| (self.conn.reference(i), n))
                .collect(),
        }
    }

    fn step_rng(&self, timestep: u64, stream: u64) -> Rng {
        let base = rng::derive_seed(self.params.seed, rng::streams::TM_STEP);
        rng::child(base, timestep.wrapping_mul(2).wrapping_add(stream))
    }

    /// Computes active and winner cells for `active_columns` from the
    /// current (previous-step) predictive state, without learning.
    pub fn activate_cells(&self, active_columns: &Sdr) -> Result<Activation> {
        if active_columns.width() != self.params.num_columns {
            return Err(Error::WidthMismatch {
                expected: self.params.num_columns,
                actual: active_columns.width(),
            });
        }
        let m = self.params.cells_per_column as u32;
        let mut winner_rng = self.step_rng(self.timestep + 1, 0);
        let prev = &self.prediction;
        let mut act = Activation {
            active_columns: active_columns.active().to_vec(),
            ..Default::default()
        };

        // Both segment lists are sorted by owner, so a column's segments
        // form a contiguous run.
        let (mut ai, mut mi) = (0usize, 0usize);
        for &col in active_columns.active() {
            let lo = col * m;
            let hi = lo + m;
            let owner_of = |r: &SegmentRef| self.conn.get(*r).map(|d| d.owner);
            while ai < prev.active_segments.len() && owner_of(&prev.active_segments[ai]).map_or(true, |o| o < lo) {
                ai += 1;
            }
            let a_start = ai;
            while ai < prev.active_segments.len() && owner_of(&prev.active_segments[ai]).is_some_and(|o| o < hi) {
                ai += 1;
            }
            while mi < prev.matching_segments.len() && owner_of(&prev.matching_segments[mi].0).map_or(true, |o| o < lo) {
                mi += 1;
            }
            let m_start = mi;
            while mi < prev.matching_segments.len()
                && owner_of(&prev.matching_segments[mi].0).is_some_and(|o| o < hi)
            {
                mi += 1;
            }
            let col_active = &prev.active_segments[a_start..ai];
            let col_matching = &prev.matching_segments[m_start..mi];

            if !col_active.is_empty() {
                // Predicted column.
                let mut last = None;
                for r in col_active {
                    let owner = self.conn.get(*r).expect("live").owner;
                    if last != Some(owner) {
                        act.active_cells.push(owner);
                        act.winner_cells.push(owner);
                        last = Some(owner);
                    }
                    act.actions.push(LearnAction::Reinforce(*r));
                }
                continue;
            }

            // Burst.
            act.bursting_columns.push(col);
            let live: Vec<CellIdx> = (lo..hi).filter(|&c| !self.dead[c as usize]).collect();
            if live.is_empty() {
                continue;
            }
            act.active_cells.extend_from_slice(&live);
            let best = col_matching
                .iter()
                .filter(|(r, _)| self.conn.is_live(*r))
                .fold(None::<(SegmentRef, u32)>, |best, &(r, n)| match best {
                    Some((_, bn)) if bn >= n => best,
                    _ => Some((r, n)),
                });
            match best {
                Some((r, n)) => {
                    act.winner_cells.push(self.conn.get(r).expect("live").owner);
                    act.actions.push(LearnAction::ReinforceAndGrow(r, n));
                }
                None => {
                    let fewest = live
                        .iter()
                        .map(|&c| self.conn.segments_of(c).len())
                        .min()
                        .expect("nonempty");
                    let candidates: Vec<CellIdx> = live
                        .iter()
                        .copied()
                        .filter(|&c| self.conn.segments_of(c).len() == fewest)
                        .collect();
                    let winner = candidates[winner_rng.gen_range(0..candidates.len())];
                    act.winner_cells.push(winner);
                    act.actions.push(LearnAction::Create(winner));
                }
            }
        }
        act.winner_cells.sort_unstable();
        Ok(act)
    }

    /// Applies the learning rules for a completed activation phase. Must be
    /// called before the network state advances past the previous step.
    pub fn learn(&mut self, act: &Activation) {
        let rates = self.rates;
        let t = self.timestep + 1;
        let prev_active = std::mem::take(&mut self.active_cells);
        let prev_winners = std::mem::take(&mut self.winner_cells);
        let mut grow_rng = self.step_rng(t, 1);
        let max_new = self.params.max_new_synapses_per_step;

        for action in &act.actions {
            match *action {
                LearnAction::Reinforce(r) => {
                    if self.conn.is_live(r) {
                        self.reinforce(r.idx, &prev_active, t);
                    }
                }
                LearnAction::ReinforceAndGrow(r, n_potential) => {
                    if self.conn.is_live(r) && self.reinforce(r.idx, &prev_active, t) {
                        let want = max_new.saturating_sub(n_potential as usize);
                        self.grow(r.idx, &prev_winners, want, &mut grow_rng);
                    }
                }
                LearnAction::Create(cell) => {
                    if prev_winners.is_empty() {
                        continue;
                    }
                    let idx = self.create_segment(cell, t);
                    self.grow(idx, &prev_winners, max_new, &mut grow_rng);
                    if self.conn.seg(idx).synapses.is_empty() {
                        self.conn.destroy_segment(idx);
                    }
                }
            }
        }

        if rates.predicted_decrement > 0 {
            let punished: Vec<SegmentRef> = self
                .prediction
                .active_segments
                .iter()
                .copied()
                .filter(|r| {
                    self.conn
                        .get(*r)
                        .is_some_and(|d| act.active_cells.binary_search(&d.owner).is_err())
                })
                .collect();
            for r in punished {
                if self.conn.is_live(r) {
                    self.conn.update_synapses(r.idx, |pre, p| {
                        if prev_active.binary_search(&pre).is_ok() {
                            p.saturating_sub(rates.predicted_decrement)
                        } else {
                            p
                        }
                    });
                }
            }
        }

        self.active_cells = prev_active;
        self.winner_cells = prev_winners;
    }

    /// Hebbian update: active presynaptic cells gain, the rest lose.
    fn reinforce(&mut self, idx: SegIdx, prev_active: &[CellIdx], t: u64) -> bool {
        let rates = self.rates;
        self.conn.seg_mut(idx).last_active = t;
        self.conn.update_synapses(idx, |pre, p| {
            if prev_active.binary_search(&pre).is_ok() {
                p.saturating_add(rates.increment).min(PERMANENCE_MAX)
            } else {
                p.saturating_sub(rates.decrement)
            }
        })
    }

    fn create_segment(&mut self, cell: CellIdx, t: u64) -> SegIdx {
        let segs = self.conn.segments_of(cell);
        if segs.len() >= self.params.max_segments_per_cell {
            let victim = segs
                .iter()
                .copied()
                .min_by_key(|&i| {
                    let d = self.conn.seg(i);
                    (d.last_active, d.created)
                })
                .expect("nonempty");
            self.conn.destroy_segment(victim);
        }
        self.conn.create_segment(cell, t)
    }

    /// Grows up to `want` synapses to a sample of `candidates` not already
    /// presynaptic, evicting the weakest synapses if the segment is full.
    fn grow(&mut self, idx: SegIdx, candidates: &[CellIdx], want: usize, rng: &mut Rng) {
        if want == 0 {
            return;
        }
        let seg = self.conn.seg(idx);
        let owner = seg.owner;
        let pool: Vec<CellIdx> = candidates
            .iter()
            .copied()
            .filter(|&c| c != owner && !self.dead[c as usize])
            .filter(|&c| seg.synapses.binary_search_by_key(&c, |s| s.presyn).is_err())
            .collect();
        if pool.is_empty() {
            return;
        }
        let n = want.min(pool.len());
        let mut chosen: Vec<CellIdx> = if n == pool.len() {
            pool
        } else {
            index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect()
        };
        chosen.sort_unstable();

        let max = self.params.max_synapses_per_segment;
        let have = self.conn.seg(idx).synapses.len();
        if have + n > max {
            let excess = have + n - max;
            let mut weakest: Vec<(Permanence, CellIdx)> = self
                .conn
                .seg(idx)
                .synapses
                .iter()
                .map(|s| (s.perm, s.presyn))
                .collect();
            weakest.sort_unstable();
            for &(_, pre) in weakest.iter().take(excess) {
                self.conn.remove_synapse(idx, pre);
            }
        }
        for c in chosen {
            self.conn.add_synapse(idx, c, self.rates.initial);
        }
    }

    /// Runs one timestep: activation, optional learning, then prediction.
    pub fn step(&mut self, active_columns: &Sdr, learn: bool) -> Result<TmState> {
        let act = self.activate_cells(active_columns)?;
        if learn {
            self.learn(&act);
        }
        self.timestep += 1;
        self.active_columns = act.active_columns;
        self.active_cells = act.active_cells;
        self.active_cells.sort_unstable();
        self.winner_cells = act.winner_cells;
        self.bursting_columns = act.bursting_columns;
        self.prediction = self.compute_predictive(&self.active_cells.clone());
        let t = self.timestep;
        for r in &self.prediction.active_segments {
            self.conn.seg_mut(r.idx).last_active = t;
        }
        Ok(self.state())
    }

    /// Clears activity and predictions; learned segments are kept.
    pub fn reset(&mut self) {
        self.active_columns.clear();
        self.active_cells.clear();
        self.winner_cells.clear();
        self.bursting_columns.clear();
        self.prediction = Prediction::default();
    }

    /// Kills `floor(fraction * num_cells)` uniformly chosen live cells,
    /// deleting their segments and every synapse they source. Dead cells
    /// never activate, predict, win or get sampled. Returns the number
    /// killed.
    pub fn kill_cells(&mut self, fraction: f64, seed: u64) -> Result<usize> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::param("kill.fraction", format!("{fraction} not in [0, 1]")));
        }
        let target = (fraction * self.num_cells() as f64).floor() as usize;
        let live: Vec<CellIdx> = (0..self.num_cells() as u32).filter(|&c| !self.dead[c as usize]).collect();
        let n = target.min(live.len());
        let mut r = rng::child(seed, rng::streams::KILL);
        let mut victims: Vec<CellIdx> = index::sample(&mut r, live.len(), n).into_iter().map(|i| live[i]).collect();
        victims.sort_unstable();
        for &cell in &victims {
            self.dead[cell as usize] = true;
            self.conn.destroy_segments_of(cell);
            self.conn.remove_presynaptic_cell(cell);
        }
        self.num_dead += n;
        let keep = |v: &mut Vec<CellIdx>, dead: &[bool]| v.retain(|&c| !dead[c as usize]);
        keep(&mut self.active_cells, &self.dead);
        keep(&mut self.winner_cells, &self.dead);
        self.prediction = self.compute_predictive(&self.active_cells.clone());
        Ok(n)
    }
}

/// Columns holding at least one of `cells`.
pub fn predicted_columns(cells: &[CellIdx], params: &TmParams) -> Sdr {
    let m = params.cells_per_column as u32;
    let mut cols: Vec<u32> = cells.iter().map(|&c| c / m).collect();
    cols.dedup();
    Sdr::from_sorted_unchecked(params.num_columns, cols)
}

impl TmState {
    pub fn predicted_columns(&self, params: &TmParams) -> Sdr {
        predicted_columns(&self.predictive_cells, params)
    }

    /// Fraction of active columns that were predicted.
    pub fn predicted_fraction(&self) -> f64 {
        if self.active_columns.is_empty() {
            return 0.0;
        }
        1.0 - self.bursting_columns.len() as f64 / self.active_columns.len() as f64
    }
}

/// Number of active cells in `cells` shared with `other`; both sorted.
pub fn cell_overlap(cells: &[CellIdx], other: &[CellIdx]) -> usize {
    sorted_intersection_count(cells, other)
}

#[cfg(test)]
mod tests;
