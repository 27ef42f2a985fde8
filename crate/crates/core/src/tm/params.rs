use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Permanences are stored as integers in units of 1e-4, so learning is
/// exact and snapshots reproduce trajectories bit for bit.
pub type Permanence = u16;
pub const PERMANENCE_SCALE: f64 = 10_000.0;
pub const PERMANENCE_MAX: Permanence = 10_000;

pub fn to_fixed(p: f64) -> Permanence {
    (p.clamp(0.0, 1.0) * PERMANENCE_SCALE).round() as Permanence
}

pub fn from_fixed(p: Permanence) -> f64 {
    p as f64 / PERMANENCE_SCALE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmParams {
    pub num_columns: usize,
    pub cells_per_column: usize,
    /// Connected active synapses needed for a segment to be active.
    pub activation_threshold: usize,
    /// Positive-permanence active synapses needed for a segment to match.
    pub matching_threshold: usize,
    pub initial_permanence: f64,
    pub connected_threshold: f64,
    pub permanence_increment: f64,
    pub permanence_decrement: f64,
    /// Decay applied to segments that predicted a cell that stayed silent.
    pub predicted_decrement: f64,
    pub max_segments_per_cell: usize,
    pub max_synapses_per_segment: usize,
    pub max_new_synapses_per_step: usize,
    pub seed: u64,
}

impl Default for TmParams {
    fn default() -> Self {
        TmParams {
            num_columns: 2048,
            cells_per_column: 32,
            activation_threshold: 15,
            matching_threshold: 6,
            initial_permanence: 0.21,
            connected_threshold: 0.5,
            permanence_increment: 0.1,
            permanence_decrement: 0.1,
            predicted_decrement: 0.01,
            max_segments_per_cell: 128,
            max_synapses_per_segment: 128,
            max_new_synapses_per_step: 32,
            seed: 42,
        }
    }
}

impl TmParams {
    pub fn num_cells(&self) -> usize {
        self.num_columns * self.cells_per_column
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} not in [0, 1]")))
            }
        };
        unit("tm.initial_permanence", self.initial_permanence)?;
        unit("tm.connected_threshold", self.connected_threshold)?;
        unit("tm.permanence_increment", self.permanence_increment)?;
        unit("tm.permanence_decrement", self.permanence_decrement)?;
        unit("tm.predicted_decrement", self.predicted_decrement)?;
        if !(self.initial_permanence > 0.0 && self.initial_permanence < self.connected_threshold) {
            return Err(Error::param(
                "tm.initial_permanence",
                "need 0 < initial_permanence < connected_threshold",
            ));
        }
        if self.num_columns == 0 || self.cells_per_column == 0 {
            return Err(Error::param("tm.num_columns", "columns and cells must be positive"));
        }
        if self.num_cells() > u32::MAX as usize {
            return Err(Error::param("tm.num_columns", "too many cells"));
        }
        if self.activation_threshold == 0 {
            return Err(Error::param("tm.activation_threshold", "must be positive"));
        }
        if self.matching_threshold == 0 || self.matching_threshold > self.activation_threshold {
            return Err(Error::param(
                "tm.matching_threshold",
                "need 0 < matching_threshold <= activation_threshold",
            ));
        }
        if self.max_segments_per_cell == 0 {
            return Err(Error::param("tm.max_segments_per_cell", "must be positive"));
        }
        if self.max_synapses_per_segment == 0 || self.max_synapses_per_segment > u16::MAX as usize {
            return Err(Error::param("tm.max_synapses_per_segment", "must be in 1..=65535"));
        }
        if self.max_new_synapses_per_step > self.max_synapses_per_segment {
            return Err(Error::param(
                "tm.max_new_synapses_per_step",
                "must not exceed max_synapses_per_segment",
            ));
        }
        Ok(())
    }
}

/// Fixed-point copies of the learning constants.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FixedRates {
    pub initial: Permanence,
    pub connected: Permanence,
    pub increment: Permanence,
    pub decrement: Permanence,
    pub predicted_decrement: Permanence,
}

impl FixedRates {
    pub fn new(p: &TmParams) -> Self {
        FixedRates {
            initial: to_fixed(p.initial_permanence),
            connected: to_fixed(p.connected_threshold),
            increment: to_fixed(p.permanence_increment),
            decrement: to_fixed(p.permanence_decrement),
            predicted_decrement: to_fixed(p.predicted_decrement),
        }
    }
}
