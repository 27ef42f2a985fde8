//! Sparse distributed representations.
//!
//! An [`Sdr`] is a fixed-width binary vector stored as its strictly
//! increasing list of active bit indices. At 2% sparsity the index form is
//! far smaller than a bitmap and intersections run in O(|a| + |b|).
//! Dense word bitmaps are produced on demand for hot kernels.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Sdr {
    width: u32,
    active: Vec<u32>,
}

impl Sdr {
    /// Builds an SDR from indices that must already be strictly increasing
    /// and below `width`.
    pub fn new(width: usize, active: Vec<u32>) -> Result<Self> {
        if width == 0 || width > u32::MAX as usize {
            return Err(Error::InvalidSdr(format!("width {width} out of range")));
        }
        if let Some(w) = active.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSdr(format!(
                "indices not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let Some(&last) = active.last() {
            if last as usize >= width {
                return Err(Error::InvalidSdr(format!(
                    "index {last} out of range for width {width}"
                )));
            }
        }
        Ok(Sdr {
            width: width as u32,
            active,
        })
    }

    /// Builds an SDR from indices in any order, dropping duplicates.
    pub fn from_unsorted(width: usize, bits: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut active: Vec<u32> = bits.into_iter().collect();
        active.sort_unstable();
        active.dedup();
        Sdr::new(width, active)
    }

    pub(crate) fn from_sorted_unchecked(width: usize, active: Vec<u32>) -> Self {
        debug_assert!(active.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(active.last().map_or(true, |&b| (b as usize) < width));
        Sdr {
            width: width as u32,
            active,
        }
    }

    pub fn empty(width: usize) -> Result<Self> {
        Sdr::new(width, Vec::new())
    }

    /// Draws `num_active` distinct bits uniformly at random. The same
    /// `(width, num_active, seed)` always yields the same SDR.
    pub fn random(width: usize, num_active: usize, seed: u64) -> Result<Self> {
        Sdr::random_with(width, num_active, &mut rng::seeded(seed))
    }

    pub fn random_with(width: usize, num_active: usize, rng: &mut Rng) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidSdr("width must be positive".into()));
        }
        if num_active > width {
            return Err(Error::InvalidSdr(format!(
                "cannot activate {num_active} bits of {width}"
            )));
        }
        let bits = index::sample(rng, width, num_active)
            .into_iter()
            .map(|i| i as u32);
        Sdr::from_unsorted(width, bits)
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn active(&self) -> &[u32] {
        &self.active
    }

    pub fn into_active(self) -> Vec<u32> {
        self.active
    }

    /// Number of active bits.
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn sparsity(&self) -> f64 {
        self.active.len() as f64 / self.width as f64
    }

    pub fn contains(&self, bit: u32) -> bool {
        self.active.binary_search(&bit).is_ok()
    }

    fn check_width(&self, other: &Sdr) -> Result<()> {
        if self.width != other.width {
            return Err(Error::WidthMismatch {
                expected: self.width(),
                actual: other.width(),
            });
        }
        Ok(())
    }

    /// Number of bits active in both.
    pub fn overlap(&self, other: &Sdr) -> Result<usize> {
        self.check_width(other)?;
        Ok(sorted_intersection_count(&self.active, &other.active))
    }

    /// Set union of a nonempty list of equal-width SDRs.
    pub fn union<'a, I>(sdrs: I) -> Result<Sdr>
    where
        I: IntoIterator<Item = &'a Sdr>,
    {
        let mut iter = sdrs.into_iter();
        let first = iter.next().ok_or(Error::Empty("union of zero SDRs"))?;
        let mut bits = first.active.clone();
        for s in iter {
            first.check_width(s)?;
            bits.extend_from_slice(&s.active);
        }
        bits.sort_unstable();
        bits.dedup();
        Ok(Sdr::from_sorted_unchecked(first.width(), bits))
    }

    /// Concatenates SDRs end to end; the result's width is the sum of widths.
    pub fn concat<'a, I>(parts: I) -> Result<Sdr>
    where
        I: IntoIterator<Item = &'a Sdr>,
    {
        let mut offset = 0u32;
        let mut bits = Vec::new();
        for p in parts {
            bits.extend(p.active.iter().map(|&b| b + offset));
            offset = offset
                .checked_add(p.width)
                .ok_or_else(|| Error::InvalidSdr("concatenated width overflows".into()))?;
        }
        if offset == 0 {
            return Err(Error::Empty("concatenation of zero SDRs"));
        }
        Ok(Sdr::from_sorted_unchecked(offset as usize, bits))
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut dense = vec![false; self.width()];
        for &b in &self.active {
            dense[b as usize] = true;
        }
        dense
    }

    /// Packs the SDR into little-endian 64-bit words.
    pub fn to_words(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.width().div_ceil(64)];
        for &b in &self.active {
            words[(b / 64) as usize] |= 1 << (b % 64);
        }
        words
    }
}

/// Size of the intersection of two strictly increasing slices.
pub fn sorted_intersection_count(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Text form `width|i1,i2,...`.
impl fmt::Display for Sdr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|", self.width)?;
        for (k, b) in self.active.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for Sdr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (w, bits) = s
            .split_once('|')
            .ok_or_else(|| Error::InvalidSdr(format!("missing `|` in {s:?}")))?;
        let width: usize = w
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSdr(format!("bad width {w:?}")))?;
        let active = if bits.trim().is_empty() {
            Vec::new()
        } else {
            bits.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::InvalidSdr(format!("bad index {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Sdr::new(width, active)
    }
}

impl Serialize for Sdr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Sdr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
