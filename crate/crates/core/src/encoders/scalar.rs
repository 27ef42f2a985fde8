use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdr::Sdr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarParams {
    pub min: f64,
    pub max: f64,
    pub width: usize,
    pub active_bits: usize,
    #[serde(default = "default_true")]
    pub clip_out_of_range: bool,
    /// Wrap the window around the end of the bit range; `max` is then the
    /// period and is equivalent to `min`.
    #[serde(default)]
    pub periodic: bool,
}

fn default_true() -> bool {
    true
}

impl ScalarParams {
    /// Passenger-count defaults: 21-bit window over 400 bits, [0, 40000].
    pub fn taxi_count() -> Self {
        ScalarParams {
            min: 0.0,
            max: 40_000.0,
            width: 400,
            active_bits: 21,
            clip_out_of_range: true,
            periodic: false,
        }
    }
}

/// Contiguous window of ON bits whose position tracks the value.
///
/// Non-periodic: the window start is `round((v - min) / (max - min) *
/// (width - active_bits))`, so `min` starts at bit 0 and `max` ends at the
/// last bit. Two values at least `(max - min) * active_bits /
/// (width - active_bits)` apart never overlap.
///
/// Periodic: the start is `round((v - min) / (max - min) * width) mod width`
/// and the window wraps.
#[derive(Debug, Clone)]
pub struct ScalarEncoder {
    params: ScalarParams,
}

impl ScalarEncoder {
    pub fn new(params: ScalarParams) -> Result<Self> {
        let p = &params;
        if !(p.min.is_finite() && p.max.is_finite() && p.min < p.max) {
            return Err(Error::param("scalar.min/max", format!("need min < max, got [{}, {}]", p.min, p.max)));
        }
        if p.active_bits == 0 || p.active_bits > p.width {
            return Err(Error::param(
                "scalar.active_bits",
                format!("{} not in 1..={}", p.active_bits, p.width),
            ));
        }
        if !p.periodic && p.active_bits == p.width {
            return Err(Error::param("scalar.active_bits", "window fills the whole width"));
        }
        Ok(ScalarEncoder { params })
    }

    pub fn params(&self) -> &ScalarParams {
        &self.params
    }

    pub fn width(&self) -> usize {
        self.params.width
    }

    /// Smallest value separation that guarantees zero overlap
    /// (non-periodic encoders).
    pub fn zero_overlap_distance(&self) -> f64 {
        let p = &self.params;
        (p.max - p.min) * p.active_bits as f64 / (p.width - p.active_bits) as f64
    }

    pub fn encode(&self, value: f64) -> Result<Sdr> {
        if !value.is_finite() {
            return Err(Error::NonFinite(value));
        }
        let p = &self.params;
        let span = p.max - p.min;
        if p.periodic {
            let frac = ((value - p.min) / span).rem_euclid(1.0);
            let start = ((frac * p.width as f64).round() as usize) % p.width;
            let bits = (0..p.active_bits).map(|k| ((start + k) % p.width) as u32);
            return Sdr::from_unsorted(p.width, bits);
        }
        if (value < p.min || value > p.max) && !p.clip_out_of_range {
            return Err(Error::Data(format!(
                "value {value} outside [{}, {}]",
                p.min, p.max
            )));
        }
        let v = value.clamp(p.min, p.max);
        let positions = (p.width - p.active_bits) as f64;
        let start = ((v - p.min) / span * positions).round() as u32;
        Ok(Sdr::from_sorted_unchecked(
            p.width,
            (start..start + p.active_bits as u32).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc() -> ScalarEncoder {
        ScalarEncoder::new(ScalarParams {
            min: 0.0,
            max: 100.0,
            width: 120,
            active_bits: 21,
            clip_out_of_range: true,
            periodic: false,
        })
        .unwrap()
    }

    #[test]
    fn boundaries() {
        let e = enc();
        assert_eq!(e.encode(0.0).unwrap().active()[0], 0);
        assert_eq!(*e.encode(100.0).unwrap().active().last().unwrap(), 119);
        assert_eq!(e.encode(-5.0).unwrap(), e.encode(0.0).unwrap());
        assert_eq!(e.encode(1e9).unwrap(), e.encode(100.0).unwrap());
    }

    #[test]
    fn rejects_non_finite_and_unclipped_out_of_range() {
        let e = enc();
        assert!(matches!(e.encode(f64::NAN), Err(Error::NonFinite(_))));
        let mut p = e.params().clone();
        p.clip_out_of_range = false;
        let strict = ScalarEncoder::new(p).unwrap();
        assert!(strict.encode(101.0).is_err());
        assert!(strict.encode(50.0).is_ok());
    }

    #[test]
    fn windows_separated_by_zero_overlap_distance_are_disjoint() {
        let e = enc();
        // 100 * 21 / 99
        let d = e.zero_overlap_distance();
        assert!((d - 2100.0 / 99.0).abs() < 1e-12);
        for i in 0..200 {
            let v = i as f64 * 0.37;
            if v + d > 100.0 {
                break;
            }
            assert_eq!(e.encode(v).unwrap().overlap(&e.encode(v + d).unwrap()).unwrap(), 0);
        }
    }

    #[test]
    fn overlap_non_increasing_in_distance() {
        let e = enc();
        let base = e.encode(30.0).unwrap();
        let mut last = usize::MAX;
        for i in 0..400 {
            let o = base.overlap(&e.encode(30.0 + i as f64 * 0.1).unwrap()).unwrap();
            assert!(o <= last);
            last = o;
        }
        assert_eq!(last, 0);
    }

    #[test]
    fn periodic_wraps() {
        let e = ScalarEncoder::new(ScalarParams {
            min: 0.0,
            max: 24.0,
            width: 240,
            active_bits: 21,
            clip_out_of_range: true,
            periodic: true,
        })
        .unwrap();
        let late = e.encode(23.9).unwrap();
        let early = e.encode(0.1).unwrap();
        let neighbour = e.encode(23.7).unwrap();
        assert_eq!(late.len(), 21);
        assert_eq!(late.overlap(&early).unwrap(), late.overlap(&neighbour).unwrap());
        assert_eq!(e.encode(24.0).unwrap(), e.encode(0.0).unwrap());
    }
}
