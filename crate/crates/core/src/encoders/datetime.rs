use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::scalar::{ScalarEncoder, ScalarParams};
use crate::error::{Error, Result};
use crate::sdr::Sdr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatetimeParams {
    pub time_of_day_width: usize,
    pub time_of_day_active: usize,
    pub day_of_week_width: usize,
    pub day_of_week_active: usize,
}

impl Default for DatetimeParams {
    fn default() -> Self {
        DatetimeParams {
            time_of_day_width: 240,
            time_of_day_active: 21,
            day_of_week_width: 147,
            day_of_week_active: 21,
        }
    }
}

/// Periodic time-of-day (hours in [0, 24)) and day-of-week (whole days in
/// [0, 7), Monday = 0) encoders.
#[derive(Debug, Clone)]
pub struct DatetimeEncoder {
    time_of_day: ScalarEncoder,
    day_of_week: ScalarEncoder,
}

impl DatetimeEncoder {
    pub fn new(p: &DatetimeParams) -> Result<Self> {
        let periodic = |max, width, active_bits| ScalarParams {
            min: 0.0,
            max,
            width,
            active_bits,
            clip_out_of_range: true,
            periodic: true,
        };
        Ok(DatetimeEncoder {
            time_of_day: ScalarEncoder::new(periodic(24.0, p.time_of_day_width, p.time_of_day_active))?,
            day_of_week: ScalarEncoder::new(periodic(7.0, p.day_of_week_width, p.day_of_week_active))?,
        })
    }

    pub fn widths(&self) -> (usize, usize) {
        (self.time_of_day.width(), self.day_of_week.width())
    }

    /// Returns the (time-of-day, day-of-week) pair.
    pub fn encode(&self, ts: NaiveDateTime) -> (Sdr, Sdr) {
        let hours = ts.hour() as f64 + ts.minute() as f64 / 60.0 + ts.second() as f64 / 3600.0;
        let day = ts.weekday().num_days_from_monday() as f64;
        (
            self.time_of_day.encode(hours).expect("finite hours"),
            self.day_of_week.encode(day).expect("finite day"),
        )
    }

    /// Parses an ISO-8601 local timestamp and encodes it.
    pub fn encode_str(&self, ts: &str) -> Result<(Sdr, Sdr)> {
        Ok(self.encode(parse_timestamp(ts)?))
    }
}

/// Accepts `YYYY-MM-DD HH:MM[:SS]` with either a space or `T` separator.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    Err(Error::Data(format!("unparseable timestamp {s:?}")))
}
