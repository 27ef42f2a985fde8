//! Demand series: CSV ingestion into 30-minute bins, the synthetic
//! daily/weekly fixture, schedule perturbations and the naive baselines.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike, Weekday};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{PerturbWindow, PerturbationConfig, SyntheticConfig};
use crate::encoders::parse_timestamp;
use crate::error::{Error, Result};
use crate::rng;

pub const BIN_MINUTES: i64 = 30;
/// One week of 30-minute bins.
pub const WEEK: usize = 7 * 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxiRow {
    pub timestamp: NaiveDateTime,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub rows: Vec<TaxiRow>,
    /// Rows that could not be parsed.
    pub skipped: usize,
    /// Missing bins between consecutive rows, as (after, missing count).
    pub gaps: Vec<(NaiveDateTime, usize)>,
}

/// Start of the 30-minute bin holding `ts`.
pub fn bin_start(ts: NaiveDateTime) -> NaiveDateTime {
    let minute = ts.minute() as i64 - ts.minute() as i64 % BIN_MINUTES;
    ts.date().and_hms_opt(ts.hour(), minute as u32, 0).expect("valid time")
}

fn parse_count(s: &str) -> Option<u64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Some(v);
    }
    let v: f64 = s.parse().ok()?;
    (v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64).then_some(v as u64)
}

/// Reads `(timestamp, count)` rows, sums them into 30-minute bins and
/// sorts the result. Unparseable rows are counted and skipped.
pub fn ingest_reader<R: Read>(reader: R, timestamp_column: &str, value_column: &str) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Data(format!("csv header: {e}")))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("csv has no column {name:?}")))
    };
    let (ti, vi) = (col(timestamp_column)?, col(value_column)?);
    let mut bins: BTreeMap<NaiveDateTime, u64> = BTreeMap::new();
    let mut skipped = 0;
    for record in rdr.records() {
        let parsed = record.ok().and_then(|r| {
            let ts = parse_timestamp(r.get(ti)?).ok()?;
            let v = parse_count(r.get(vi)?)?;
            Some((ts, v))
        });
        match parsed {
            Some((ts, v)) => *bins.entry(bin_start(ts)).or_default() += v,
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed rows");
    }
    if bins.is_empty() {
        return Err(Error::Data("no valid rows".into()));
    }
    let rows: Vec<TaxiRow> = bins.into_iter().map(|(timestamp, count)| TaxiRow { timestamp, count }).collect();
    let gaps = rows
        .windows(2)
        .filter_map(|w| {
            let missing = ((w[1].timestamp - w[0].timestamp).num_minutes() / BIN_MINUTES - 1) as usize;
            (missing > 0).then_some((w[0].timestamp, missing))
        })
        .collect();
    Ok(Ingested { rows, skipped, gaps })
}

pub fn ingest_csv(path: &Path, timestamp_column: &str, value_column: &str) -> Result<Ingested> {
    let f = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    ingest_reader(f, timestamp_column, value_column)
}

pub fn write_csv<W: Write>(rows: &[TaxiRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(["timestamp", "passenger_count"]).map_err(io)?;
    for r in rows {
        w.write_record([r.timestamp.format("%Y-%m-%d %H:%M:%S").to_string(), r.count.to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn is_weekday(ts: NaiveDateTime) -> bool {
    !matches!(ts.weekday(), Weekday::Sat | Weekday::Sun)
}

fn hour_of(ts: NaiveDateTime) -> f64 {
    ts.hour() as f64 + ts.minute() as f64 / 60.0
}

pub fn check_windows(windows: &[PerturbWindow]) -> Result<()> {
    for (i, w) in windows.iter().enumerate() {
        if !(0.0 <= w.from_hour && w.from_hour < w.to_hour && w.to_hour <= 24.0) {
            return Err(Error::param("perturbation.windows", format!("window {i}: need 0 <= from_hour < to_hour <= 24")));
        }
        if !(w.factor.is_finite() && w.factor >= 0.0) {
            return Err(Error::param("perturbation.windows", format!("window {i}: factor must be >= 0")));
        }
        for (j, o) in windows.iter().enumerate().skip(i + 1) {
            // Any two windows share weekdays, so overlapping hours collide.
            if w.from_hour < o.to_hour && o.from_hour < w.to_hour {
                return Err(Error::param("perturbation.windows", format!("windows {i} and {j} overlap")));
            }
        }
    }
    Ok(())
}

/// Scales counts inside the perturbation windows from the start date on,
/// rounding half to even.
pub fn perturb(rows: &[TaxiRow], p: &PerturbationConfig) -> Result<Vec<TaxiRow>> {
    check_windows(&p.windows)?;
    Ok(rows
        .iter()
        .map(|r| {
            let mut r = *r;
            if r.timestamp.date() >= p.start {
                let h = hour_of(r.timestamp);
                let hit = p
                    .windows
                    .iter()
                    .find(|w| (!w.weekday_only || is_weekday(r.timestamp)) && w.from_hour <= h && h < w.to_hour);
                if let Some(w) = hit {
                    r.count = (r.count as f64 * w.factor).round_ties_even() as u64;
                }
            }
            r
        })
        .collect())
}

/// Noise-free fixture value at `ts`: a daily cycle with a morning and an
/// evening peak, scaled per day of week.
pub fn synthetic_mean(cfg: &SyntheticConfig, ts: NaiveDateTime) -> f64 {
    use std::f64::consts::PI;
    let h = hour_of(ts);
    // Trough near 4am, broad daytime plateau with peaks near 9am and 7pm.
    let daily = 0.5 * (1.0 - (2.0 * PI * (h - 4.0) / 24.0).cos()) + 0.15 * (4.0 * PI * (h - 6.0) / 24.0).sin();
    let day = ts.weekday().num_days_from_monday() as usize;
    let weekly = [1.0, 1.02, 1.04, 1.06, 1.1, cfg.weekend_factor * 1.1, cfg.weekend_factor][day];
    (cfg.base + cfg.daily_amplitude * daily) * weekly
}

/// The synthetic fixture: `weeks` of 30-minute bins with multiplicative
/// Gaussian noise, rounded to counts.
pub fn synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<Vec<TaxiRow>> {
    let start = bin_start(parse_timestamp(&cfg.start)?);
    if !(cfg.noise.is_finite() && cfg.noise >= 0.0) {
        return Err(Error::param("synthetic.noise", "must be >= 0"));
    }
    let normal = Normal::new(0.0, cfg.noise).map_err(|e| Error::param("synthetic.noise", e.to_string()))?;
    let mut r = rng::child(seed, rng::streams::SYNTHETIC);
    Ok((0..cfg.weeks * WEEK)
        .map(|i| {
            let timestamp = start + Duration::minutes(BIN_MINUTES * i as i64);
            let v = synthetic_mean(cfg, timestamp) * (1.0 + normal.sample(&mut r));
            TaxiRow { timestamp, count: v.max(0.0).round() as u64 }
        })
        .collect())
}

/// Previous-value forecast: the value `lookahead` rows before each target.
pub fn naive_forecast(values: &[f64], lookahead: usize) -> Vec<Option<f64>> {
    (0..values.len()).map(|t| t.checked_sub(lookahead).map(|s| values[s])).collect()
}

/// Seasonal forecast: the value `lag` rows before each target, available
/// at `lookahead` rows ahead of it since `lag >= lookahead`.
pub fn seasonal_forecast(values: &[f64], lag: usize) -> Result<Vec<Option<f64>>> {
    if values.len() <= lag {
        return Err(Error::Data(format!("series of {} rows is shorter than the seasonal lag {lag}", values.len())));
    }
    Ok((0..values.len()).map(|t| t.checked_sub(lag).map(|s| values[s])).collect())
}
