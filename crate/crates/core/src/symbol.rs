//! Opaque symbol tokens for discrete streams.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A sequence symbol or a noise symbol. The two pools never collide.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Symbol {
    Seq(u32),
    Noise(u32),
}

impl Symbol {
    /// Stable 64-bit key used to derive per-symbol seeds.
    pub fn key(self) -> u64 {
        match self {
            Symbol::Seq(i) => i as u64,
            Symbol::Noise(i) => (1 << 40) | i as u64,
        }
    }

    pub fn is_noise(self) -> bool {
        matches!(self, Symbol::Noise(_))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Seq(i) => write!(f, "S{i}"),
            Symbol::Noise(i) => write!(f, "N{i}"),
        }
    }
}

impl FromStr for Symbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Data(format!("bad symbol {s:?}"));
        let (tag, id) = s.split_at_checked(1).ok_or_else(bad)?;
        let id: u32 = id.parse().map_err(|_| bad())?;
        match tag {
            "S" => Ok(Symbol::Seq(id)),
            "N" => Ok(Symbol::Noise(id)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}
