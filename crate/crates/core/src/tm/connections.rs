//! Distal segment storage.
//!
//! Segments live in an arena with a free list. Each segment keeps its
//! synapses sorted by presynaptic cell, and a reverse index maps every
//! presynaptic cell to the segments it synapses onto, so activity counting
//! touches only segments that can receive input.
//!
//! Arena slots are reused, so long-lived references carry the segment's
//! creation number and are checked before use. Every ordering decision in
//! the temporal memory uses `(owner, created)` keys rather than slot
//! indices, which keeps trajectories independent of arena layout.

use super::params::{Permanence, PERMANENCE_MAX};
use super::CellIdx;

pub(crate) type SegIdx = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Synapse {
    pub presyn: CellIdx,
    pub perm: Permanence,
}

#[derive(Debug, Clone)]
pub(crate) struct SegmentData {
    pub owner: CellIdx,
    pub created: u64,
    pub last_active: u64,
    pub synapses: Vec<Synapse>,
}

/// Validated handle to a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmentRef {
    pub(crate) idx: SegIdx,
    pub(crate) created: u64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Connections {
    segments: Vec<Option<SegmentData>>,
    free: Vec<SegIdx>,
    cell_segments: Vec<Vec<SegIdx>>,
    presyn_index: Vec<Vec<SegIdx>>,
    next_created: u64,
    num_synapses: usize,
}

impl Connections {
    pub fn new(num_cells: usize) -> Self {
        Connections {
            cell_segments: vec![Vec::new(); num_cells],
            presyn_index: vec![Vec::new(); num_cells],
            ..Default::default()
        }
    }

    pub fn arena_len(&self) -> usize {
        self.segments.len()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len() - self.free.len()
    }

    pub fn num_synapses(&self) -> usize {
        self.num_synapses
    }

    pub fn next_created(&self) -> u64 {
        self.next_created
    }

    pub fn set_next_created(&mut self, n: u64) {
        self.next_created = n;
    }

    pub fn get(&self, r: SegmentRef) -> Option<&SegmentData> {
        self.segments
            .get(r.idx as usize)
            .and_then(|s| s.as_ref())
            .filter(|s| s.created == r.created)
    }

    pub fn seg(&self, idx: SegIdx) -> &SegmentData {
        self.segments[idx as usize].as_ref().expect("live segment")
    }

    pub fn seg_mut(&mut self, idx: SegIdx) -> &mut SegmentData {
        self.segments[idx as usize].as_mut().expect("live segment")
    }

    pub fn reference(&self, idx: SegIdx) -> SegmentRef {
        SegmentRef {
            idx,
            created: self.seg(idx).created,
        }
    }

    pub fn is_live(&self, r: SegmentRef) -> bool {
        self.get(r).is_some()
    }

    pub fn segments_of(&self, cell: CellIdx) -> &[SegIdx] {
        &self.cell_segments[cell as usize]
    }

    pub fn segments_from(&self, presyn: CellIdx) -> &[SegIdx] {
        &self.presyn_index[presyn as usize]
    }

    /// Live segments in `(created)` order.
    pub fn iter_live(&self) -> impl Iterator<Item = (SegIdx, &SegmentData)> {
        let mut v: Vec<(SegIdx, &SegmentData)> = self
            .segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (i as SegIdx, s)))
            .collect();
        v.sort_by_key(|(_, s)| s.created);
        v.into_iter()
    }

    /// Creates an empty segment on `owner`.
    pub fn create_segment(&mut self, owner: CellIdx, timestep: u64) -> SegIdx {
        let created = self.next_created;
        self.next_created += 1;
        self.insert_segment(owner, created, timestep)
    }

    /// Creates a segment with explicit bookkeeping (used when restoring).
    pub fn insert_segment(&mut self, owner: CellIdx, created: u64, last_active: u64) -> SegIdx {
        let data = SegmentData {
            owner,
            created,
            last_active,
            synapses: Vec::new(),
        };
        let idx = match self.free.pop() {
            Some(i) => {
                self.segments[i as usize] = Some(data);
                i
            }
            None => {
                self.segments.push(Some(data));
                (self.segments.len() - 1) as SegIdx
            }
        };
        self.cell_segments[owner as usize].push(idx);
        self.next_created = self.next_created.max(created + 1);
        idx
    }

    pub fn destroy_segment(&mut self, idx: SegIdx) {
        let data = self.segments[idx as usize].take().expect("live segment");
        for syn in &data.synapses {
            remove_from(&mut self.presyn_index[syn.presyn as usize], idx);
        }
        self.num_synapses -= data.synapses.len();
        remove_from(&mut self.cell_segments[data.owner as usize], idx);
        self.free.push(idx);
    }

    /// Adds a synapse; the caller guarantees `presyn` is not already present.
    pub fn add_synapse(&mut self, idx: SegIdx, presyn: CellIdx, perm: Permanence) {
        let seg = self.seg_mut(idx);
        let pos = seg
            .synapses
            .binary_search_by_key(&presyn, |s| s.presyn)
            .expect_err("duplicate synapse");
        seg.synapses.insert(pos, Synapse { presyn, perm: perm.min(PERMANENCE_MAX) });
        self.presyn_index[presyn as usize].push(idx);
        self.num_synapses += 1;
    }

    pub fn remove_synapse(&mut self, idx: SegIdx, presyn: CellIdx) {
        let seg = self.seg_mut(idx);
        if let Ok(pos) = seg.synapses.binary_search_by_key(&presyn, |s| s.presyn) {
            seg.synapses.remove(pos);
            remove_from(&mut self.presyn_index[presyn as usize], idx);
            self.num_synapses -= 1;
        }
    }

    pub fn permanence(&self, idx: SegIdx, presyn: CellIdx) -> Option<Permanence> {
        let seg = self.seg(idx);
        seg.synapses
            .binary_search_by_key(&presyn, |s| s.presyn)
            .ok()
            .map(|p| seg.synapses[p].perm)
    }

    /// Applies `f` to every synapse of the segment. Synapses whose
    /// permanence reaches zero are removed; an emptied segment is destroyed.
    /// Returns false if the segment was destroyed.
    pub fn update_synapses<F>(&mut self, idx: SegIdx, mut f: F) -> bool
    where
        F: FnMut(CellIdx, Permanence) -> Permanence,
    {
        let mut dropped = Vec::new();
        let seg = self.seg_mut(idx);
        for syn in seg.synapses.iter_mut() {
            syn.perm = f(syn.presyn, syn.perm).min(PERMANENCE_MAX);
            if syn.perm == 0 {
                dropped.push(syn.presyn);
            }
        }
        for presyn in dropped {
            self.remove_synapse(idx, presyn);
        }
        if self.seg(idx).synapses.is_empty() {
            self.destroy_segment(idx);
            return false;
        }
        true
    }

    /// Removes every synapse whose presynaptic cell is `cell`, destroying
    /// segments left empty.
    pub fn remove_presynaptic_cell(&mut self, cell: CellIdx) {
        let segs = std::mem::take(&mut self.presyn_index[cell as usize]);
        for idx in segs {
            let seg = self.seg_mut(idx);
            if let Ok(pos) = seg.synapses.binary_search_by_key(&cell, |s| s.presyn) {
                seg.synapses.remove(pos);
                self.num_synapses -= 1;
            }
            if self.seg(idx).synapses.is_empty() {
                self.destroy_segment(idx);
            }
        }
    }

    pub fn destroy_segments_of(&mut self, cell: CellIdx) {
        for idx in self.cell_segments[cell as usize].clone() {
            self.destroy_segment(idx);
        }
    }
}

fn remove_from(list: &mut Vec<SegIdx>, idx: SegIdx) {
    if let Some(p) = list.iter().position(|&x| x == idx) {
        list.swap_remove(p);
    }
}
