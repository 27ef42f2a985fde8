//! Versioned text snapshot of a temporal memory.
//!
//! ```text
//! seqmem-tm 1
//! params {"num_columns":2048,...}
//! timestep 1234
//! next_created 5678
//! dead <n> <cell> ...
//! active <n> <cell> ...
//! winners <n> <cell> ...
//! columns <n> <column> ...
//! bursting <n> <column> ...
//! segments <n>
//! <owner> <created> <last_active> <n> <presyn>:<perm> ...
//! end
//! ```
//!
//! Permanences are the exact fixed-point integers (units of 1e-4), so a
//! restored network continues on the same trajectory as the original.

use std::fmt::Write as _;

use super::{CellIdx, Permanence, TemporalMemory, TmParams, PERMANENCE_MAX};
use crate::error::{Error, Result};

pub const MAGIC: &str = "seqmem-tm";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Snapshot(msg.into())
}

fn write_list(out: &mut String, tag: &str, cells: &[CellIdx]) {
    let _ = write!(out, "{tag} {}", cells.len());
    for c in cells {
        let _ = write!(out, " {c}");
    }
    out.push('\n');
}

impl TemporalMemory {
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(
            out,
            "params {}",
            serde_json::to_string(&self.params).expect("params serialize")
        );
        let _ = writeln!(out, "timestep {}", self.timestep);
        let _ = writeln!(out, "next_created {}", self.conn.next_created());
        let dead: Vec<CellIdx> = (0..self.num_cells() as u32).filter(|&c| self.dead[c as usize]).collect();
        write_list(&mut out, "dead", &dead);
        write_list(&mut out, "active", &self.active_cells);
        write_list(&mut out, "winners", &self.winner_cells);
        write_list(&mut out, "columns", &self.active_columns);
        write_list(&mut out, "bursting", &self.bursting_columns);
        let _ = writeln!(out, "segments {}", self.conn.num_segments());
        for (_, s) in self.conn.iter_live() {
            let _ = write!(out, "{} {} {} {}", s.owner, s.created, s.last_active, s.synapses.len());
            for syn in &s.synapses {
                let _ = write!(out, " {}:{}", syn.presyn, syn.perm);
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    /// Restores a network from [`TemporalMemory::to_snapshot`] output. The
    /// whole file is validated before a network is returned.
    pub fn from_snapshot(text: &str) -> Result<TemporalMemory> {
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("truncated before {what}")));

        let header = next("header")?;
        let mut h = header.split_whitespace();
        if h.next() != Some(MAGIC) {
            return Err(bad("not a temporal memory snapshot"));
        }
        let version: u32 = h.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("missing version"))?;
        if version != VERSION {
            return Err(bad(format!("unsupported snapshot version {version} (expected {VERSION})")));
        }

        let params_line = next("params")?;
        let json = params_line.strip_prefix("params ").ok_or_else(|| bad("missing params"))?;
        let params: TmParams = serde_json::from_str(json).map_err(|e| bad(format!("params: {e}")))?;
        let mut tm = TemporalMemory::new(params).map_err(|e| bad(format!("params: {e}")))?;
        let n = tm.num_cells() as u32;

        let scalar = |line: &str, tag: &str| -> Result<u64> {
            line.strip_prefix(tag)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| bad(format!("bad `{}` line", tag.trim())))
        };
        let timestep = scalar(next("timestep")?, "timestep ")?;
        let next_created = scalar(next("next_created")?, "next_created ")?;

        let list = |line: &str, tag: &str| -> Result<Vec<CellIdx>> {
            let mut it = line.split_whitespace();
            if it.next() != Some(tag) {
                return Err(bad(format!("expected `{tag}` line")));
            }
            let count: usize = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("{tag}: count")))?;
            let cells: Vec<CellIdx> = it
                .map(|v| v.parse::<CellIdx>().map_err(|_| bad(format!("{tag}: bad cell {v:?}"))))
                .collect::<Result<_>>()?;
            if cells.len() != count {
                return Err(bad(format!("{tag}: expected {count} cells, found {}", cells.len())));
            }
            if cells.windows(2).any(|w| w[0] >= w[1]) || cells.last().is_some_and(|&c| c >= n) {
                return Err(bad(format!("{tag}: cells unsorted or out of range")));
            }
            Ok(cells)
        };
        let dead = list(next("dead")?, "dead")?;
        let active = list(next("active")?, "active")?;
        let winners = list(next("winners")?, "winners")?;
        let columns = list(next("columns")?, "columns")?;
        let bursting = list(next("bursting")?, "bursting")?;
        let ncols = tm.params.num_columns as u32;
        if columns.last().is_some_and(|&c| c >= ncols) || bursting.iter().any(|c| columns.binary_search(c).is_err()) {
            return Err(bad("columns out of range or bursting column not active"));
        }

        let seg_count = scalar(next("segments")?, "segments ")? as usize;
        let mut segments: Vec<(CellIdx, u64, u64, Vec<(CellIdx, Permanence)>)> = Vec::with_capacity(seg_count);
        for k in 0..seg_count {
            let line = next("segment")?;
            let mut it = line.split_whitespace();
            let mut num = |what: &str| -> Result<u64> {
                it.next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(format!("segment {k}: bad {what}")))
            };
            let owner = num("owner")? as CellIdx;
            let created = num("created")?;
            let last_active = num("last_active")?;
            let count = num("synapse count")? as usize;
            let syns: Vec<(CellIdx, Permanence)> = it
                .map(|tok| {
                    let (p, v) = tok.split_once(':').ok_or_else(|| bad(format!("segment {k}: bad synapse {tok:?}")))?;
                    let pre: CellIdx = p.parse().map_err(|_| bad(format!("segment {k}: bad presyn {p:?}")))?;
                    let perm: Permanence = v.parse().map_err(|_| bad(format!("segment {k}: bad permanence {v:?}")))?;
                    Ok((pre, perm))
                })
                .collect::<Result<_>>()?;
            if syns.len() != count {
                return Err(bad(format!("segment {k}: expected {count} synapses, found {}", syns.len())));
            }
            if created >= next_created {
                return Err(bad(format!("segment {k}: creation number {created} >= next_created")));
            }
            segments.push((owner, created, last_active, syns));
        }
        if next("end")?.trim() != "end" {
            return Err(bad("missing end marker"));
        }

        for &c in &dead {
            tm.dead[c as usize] = true;
        }
        tm.num_dead = dead.len();
        segments.sort_by_key(|s| s.1);
        if segments.windows(2).any(|w| w[0].1 == w[1].1) {
            return Err(bad("duplicate segment creation number"));
        }
        for (k, (owner, created, last_active, syns)) in segments.into_iter().enumerate() {
            if owner >= n || tm.dead[owner as usize] {
                return Err(bad(format!("segment {k}: invalid owner {owner}")));
            }
            if syns.is_empty() || syns.len() > tm.params.max_synapses_per_segment {
                return Err(bad(format!("segment {k}: synapse count out of range")));
            }
            if tm.conn.segments_of(owner).len() >= tm.params.max_segments_per_cell {
                return Err(bad(format!("segment {k}: too many segments on cell {owner}")));
            }
            if syns.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(bad(format!("segment {k}: synapses unsorted")));
            }
            for &(pre, perm) in &syns {
                if pre >= n || pre == owner || tm.dead[pre as usize] || perm == 0 || perm > PERMANENCE_MAX {
                    return Err(bad(format!("segment {k}: invalid synapse {pre}:{perm}")));
                }
            }
            let idx = tm.conn.insert_segment(owner, created, last_active);
            for (pre, perm) in syns {
                tm.conn.add_synapse(idx, pre, perm);
            }
        }
        tm.conn.set_next_created(next_created);
        tm.timestep = timestep;
        tm.set_active_cells(&active, &winners).map_err(|e| bad(e.to_string()))?;
        if active.iter().any(|&c| tm.dead[c as usize]) {
            return Err(bad("dead cell listed as active"));
        }
        if active.iter().any(|&c| columns.binary_search(&tm.column_of(c)).is_err()) {
            return Err(bad("active cell outside the active columns"));
        }
        tm.active_columns = columns;
        tm.bursting_columns = bursting;
        Ok(tm)
    }
}
