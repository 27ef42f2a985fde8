//! Declarative run configuration.
//!
//! A run is fully described by a TOML file. Every section has defaults, so
//! the smallest valid file is `task = "discrete"`. Unknown keys are
//! rejected and errors name the offending field path, e.g.
//! `discrete.temporal_noise.probability`.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::classifiers::{PointEstimate, SoftmaxParams};
use crate::encoders::{DatetimeParams, PoolerParams, ScalarParams};
use crate::error::{Error, Result};
use crate::rng;
use crate::tm::TmParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Discrete,
    Taxi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    /// Base seed. Every component seed, including `tm.seed`, is derived
    /// from it, so `tm.seed` in a file is ignored.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tm: TmParams,
    #[serde(default)]
    pub discrete: DiscreteConfig,
    #[serde(default)]
    pub taxi: TaxiConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscreteConfig {
    /// One dataset block per entry; `[6, 7]` mixes 6th and 7th order.
    pub orders: Vec<usize>,
    pub groups_per_order: usize,
    /// Valid endings per context: 1, 2 or 4.
    pub endings: usize,
    /// Predictions scored per sequence end; defaults to `endings`.
    pub top_k: Option<usize>,
    /// Stream length in elements.
    pub elements: usize,
    pub noise_pool: usize,
    /// Endings are swapped at the first sequence starting at or after
    /// this element.
    pub swap_at: Option<usize>,
    pub temporal_noise: TemporalNoiseConfig,
    /// Cell-death evaluation after the main run.
    pub kill: Option<KillConfig>,
    pub encoder_width: usize,
    pub encoder_active: usize,
    /// Moving-accuracy window, in sequences.
    pub accuracy_window: usize,
    /// Accuracy level used for the elements-to-threshold summaries.
    pub threshold: f64,
    /// Accuracy level that counts as recovered after a swap.
    pub recovery_threshold: f64,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        DiscreteConfig {
            orders: vec![6, 7],
            groups_per_order: 2,
            endings: 1,
            top_k: None,
            elements: 20_000,
            noise_pool: 50_000,
            swap_at: None,
            temporal_noise: TemporalNoiseConfig::default(),
            kill: None,
            encoder_width: 2048,
            encoder_active: 40,
            accuracy_window: 100,
            threshold: 0.98,
            recovery_threshold: 0.95,
        }
    }
}

impl DiscreteConfig {
    pub fn top_k(&self) -> usize {
        self.top_k.unwrap_or(self.endings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Off,
    FromStart,
    /// From the first sequence starting at or after `after`.
    After,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalNoiseConfig {
    pub mode: NoiseMode,
    pub after: usize,
    /// Chance that a sequence gets one element replaced.
    pub probability: f64,
}

impl Default for TemporalNoiseConfig {
    fn default() -> Self {
        TemporalNoiseConfig {
            mode: NoiseMode::Off,
            after: 12_000,
            probability: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KillConfig {
    pub fractions: Vec<f64>,
    /// Elements evaluated per fraction, with learning off.
    pub eval_elements: usize,
}

impl Default for KillConfig {
    fn default() -> Self {
        KillConfig {
            fractions: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            eval_elements: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxiConfig {
    /// CSV input; the synthetic fixture is used when absent.
    pub input: Option<PathBuf>,
    pub timestamp_column: String,
    pub value_column: String,
    pub synthetic: SyntheticConfig,
    pub scalar: ScalarParams,
    pub datetime: DatetimeParams,
    pub pooler: PoolerParams,
    pub classifier: SoftmaxParams,
    pub bucket_min: f64,
    pub bucket_max: f64,
    pub point: PointEstimate,
    /// Metrics are reported from this many weeks into the stream.
    pub warmup_weeks: usize,
    /// Trailing metric window, in rows.
    pub trailing_window: usize,
    pub perturbation: Option<PerturbationConfig>,
}

impl Default for TaxiConfig {
    fn default() -> Self {
        TaxiConfig {
            input: None,
            timestamp_column: "timestamp".into(),
            value_column: "passenger_count".into(),
            synthetic: SyntheticConfig::default(),
            scalar: ScalarParams::taxi_count(),
            datetime: DatetimeParams::default(),
            pooler: PoolerParams::default(),
            classifier: SoftmaxParams::default(),
            bucket_min: 0.0,
            bucket_max: 40_000.0,
            point: PointEstimate::Argmax,
            warmup_weeks: 4,
            trailing_window: 336,
            perturbation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub weeks: usize,
    /// First timestamp, `YYYY-MM-DD HH:MM`.
    pub start: String,
    pub base: f64,
    pub daily_amplitude: f64,
    pub weekend_factor: f64,
    /// Relative standard deviation of multiplicative noise.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            weeks: 12,
            start: "2015-01-05 00:00".into(),
            base: 15_000.0,
            daily_amplitude: 10_000.0,
            weekend_factor: 0.8,
            noise: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub start: NaiveDate,
    #[serde(default = "default_windows")]
    pub windows: Vec<PerturbWindow>,
}

/// Scale counts in `[from_hour, to_hour)` local time by `factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbWindow {
    #[serde(default = "yes")]
    pub weekday_only: bool,
    pub from_hour: f64,
    pub to_hour: f64,
    pub factor: f64,
}

fn yes() -> bool {
    true
}

/// Weekday mornings 7-11am down 20%, weekday nights 9-11pm up 20%.
pub fn default_windows() -> Vec<PerturbWindow> {
    vec![
        PerturbWindow { weekday_only: true, from_hour: 7.0, to_hour: 11.0, factor: 0.8 },
        PerturbWindow { weekday_only: true, from_hour: 21.0, to_hour: 23.0, factor: 1.2 },
    ]
}

impl RunConfig {
    pub fn discrete() -> Self {
        RunConfig {
            task: TaskKind::Discrete,
            seed: 0,
            tm: TmParams::default(),
            discrete: DiscreteConfig::default(),
            taxi: TaxiConfig::default(),
        }
    }

    pub fn taxi() -> Self {
        RunConfig { task: TaskKind::Taxi, ..RunConfig::discrete() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy of this config for replica `i`. Replica 0 keeps the base seed.
    pub fn replica(&self, i: usize) -> RunConfig {
        let mut c = self.clone();
        if i > 0 {
            c.seed = rng::derive_seed(self.seed, rng::streams::REPLICA.wrapping_mul(1 << 32) + i as u64);
        }
        c
    }

    /// TM parameters with the seed derived from the run seed.
    pub fn tm_params(&self) -> TmParams {
        TmParams { seed: rng::derive_seed(self.seed, rng::streams::TM_STEP), ..self.tm.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.tm_params().validate().map_err(|e| as_config("tm", e))?;
        let d = &self.discrete;
        if d.orders.is_empty() || d.orders.iter().any(|&o| o < 2) {
            return Err(Error::config("discrete.orders", "need at least one order, each >= 2"));
        }
        if d.groups_per_order == 0 {
            return Err(Error::config("discrete.groups_per_order", "must be positive"));
        }
        if ![1, 2, 4].contains(&d.endings) {
            return Err(Error::config("discrete.endings", "must be 1, 2 or 4"));
        }
        if d.top_k() == 0 {
            return Err(Error::config("discrete.top_k", "must be positive"));
        }
        if d.noise_pool == 0 {
            return Err(Error::config("discrete.noise_pool", "must be positive"));
        }
        if d.encoder_active == 0 || d.encoder_active > d.encoder_width {
            return Err(Error::config("discrete.encoder_active", "need 0 < encoder_active <= encoder_width"));
        }
        if self.task == TaskKind::Discrete && d.encoder_width != self.tm.num_columns {
            return Err(Error::config(
                "discrete.encoder_width",
                format!("must equal tm.num_columns ({})", self.tm.num_columns),
            ));
        }
        if d.accuracy_window == 0 {
            return Err(Error::config("discrete.accuracy_window", "must be positive"));
        }
        for (name, v) in [("discrete.threshold", d.threshold), ("discrete.recovery_threshold", d.recovery_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, "must be in [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&d.temporal_noise.probability) {
            return Err(Error::config("discrete.temporal_noise.probability", "must be in [0, 1]"));
        }
        if let Some(k) = &d.kill {
            if k.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(Error::config("discrete.kill.fractions", "each fraction must be in [0, 1]"));
            }
        }
        let t = &self.taxi;
        if !(t.bucket_min < t.bucket_max) {
            return Err(Error::config("taxi.bucket_max", "must exceed bucket_min"));
        }
        if self.task == TaskKind::Taxi && t.pooler.num_columns != self.tm.num_columns {
            return Err(Error::config(
                "taxi.pooler.num_columns",
                format!("must equal tm.num_columns ({})", self.tm.num_columns),
            ));
        }
        if t.trailing_window == 0 {
            return Err(Error::config("taxi.trailing_window", "must be positive"));
        }
        if t.input.is_none() && t.synthetic.weeks == 0 {
            return Err(Error::config("taxi.synthetic.weeks", "must be positive"));
        }
        if let Some(p) = &t.perturbation {
            crate::taxi::check_windows(&p.windows).map_err(|e| as_config("taxi.perturbation.windows", e))?;
        }
        Ok(())
    }
}

fn as_config(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, message } => {
            let field = name.rsplit('.').next().unwrap_or(name);
            Error::config(format!("{prefix}.{field}"), message)
        }
        Error::Config { .. } => e,
        other => Error::config(prefix, other.to_string()),
    }
}
