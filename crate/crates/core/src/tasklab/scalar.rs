//! Online multi-step forecasting of a 30-minute count series.
//!
//! Each row is encoded (value, time of day, day of week), pooled onto the
//! columns and fed to the temporal memory. The softmax classifier reads
//! the active cells and predicts the bucket `lookahead` rows ahead; it is
//! trained on that pattern once the truth arrives.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::classifiers::{Bucketizer, SoftmaxClassifier};
use crate::config::RunConfig;
use crate::encoders::{DatetimeEncoder, ScalarEncoder, SpatialPooler};
use crate::error::{Error, Result};
use crate::metrics::MetricAccumulator;
use crate::rng::{self, streams};
use crate::sdr::Sdr;
use crate::taxi::{self, TaxiRow, WEEK};
use crate::tm::TemporalMemory;

use super::StepRecord;

#[derive(Debug, Clone)]
pub struct TaxiModel {
    pub scalar: ScalarEncoder,
    pub datetime: DatetimeEncoder,
    pub pooler: SpatialPooler,
    pub tm: TemporalMemory,
    pub classifier: SoftmaxClassifier,
    pub buckets: Bucketizer,
}

impl TaxiModel {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let t = &cfg.taxi;
        let scalar = ScalarEncoder::new(t.scalar.clone())?;
        let datetime = DatetimeEncoder::new(&t.datetime)?;
        let (tod, dow) = datetime.widths();
        let mut pp = t.pooler.clone();
        pp.seed = rng::derive_seed(cfg.seed, streams::POOLER);
        let pooler = SpatialPooler::new(pp, scalar.width() + tod + dow)?;
        let tm = TemporalMemory::new(cfg.tm_params())?;
        let classifier = SoftmaxClassifier::new(tm.num_cells(), t.classifier.clone())?;
        let buckets = Bucketizer::new(t.bucket_min, t.bucket_max, t.classifier.num_classes)?;
        Ok(TaxiModel { scalar, datetime, pooler, tm, classifier, buckets })
    }

    pub fn encode(&self, ts: NaiveDateTime, value: f64) -> Result<Sdr> {
        let v = self.scalar.encode(value)?;
        let (tod, dow) = self.datetime.encode(ts);
        Sdr::concat([&v, &tod, &dow])
    }
}

/// Rows for a config: the input CSV or the synthetic fixture, with the
/// perturbation applied when one is configured.
pub fn series_for(cfg: &RunConfig) -> Result<(Vec<TaxiRow>, usize)> {
    let t = &cfg.taxi;
    let (rows, skipped) = match &t.input {
        Some(path) => {
            let ing = taxi::ingest_csv(path, &t.timestamp_column, &t.value_column)?;
            if ing.skipped > 0 {
                log::warn!("skipped {} malformed rows in {}", ing.skipped, path.display());
            }
            (ing.rows, ing.skipped)
        }
        None => (taxi::synthetic(&t.synthetic, cfg.seed)?, 0),
    };
    let rows = match &t.perturbation {
        Some(p) => taxi::perturb(&rows, p)?,
        None => rows,
    };
    Ok((rows, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub mape: Option<f64>,
    pub nll: Option<f64>,
    pub pre_mape: Option<f64>,
    pub post_mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    /// First row at or after the perturbation start.
    pub start: usize,
    /// Trailing-window MAPE on the row before `start`.
    pub pre_level: f64,
    pub peak: f64,
    pub peak_index: usize,
    /// First row after the peak where the trailing MAPE is back within
    /// 110% of `pre_level`.
    pub recovered_index: Option<usize>,
    pub weeks_to_recover: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxiSummary {
    pub seed: u64,
    pub rows: usize,
    pub skipped_rows: usize,
    /// First scored row; earlier rows are warm-up.
    pub eval_start: usize,
    pub evaluated: usize,
    pub mape: Option<f64>,
    pub nll: Option<f64>,
    /// NLL of the uniform distribution over buckets.
    pub uniform_nll: f64,
    pub pre_mape: Option<f64>,
    pub post_mape: Option<f64>,
    pub naive: SplitMetrics,
    pub seasonal: SplitMetrics,
    pub recovery: Option<RecoverySummary>,
}

/// Metrics over the evaluation span, split at the perturbation start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Scores {
    all: MetricAccumulator,
    pre: MetricAccumulator,
    post: MetricAccumulator,
}

impl Scores {
    fn new(window: usize) -> Self {
        Scores {
            all: MetricAccumulator::new(window),
            pre: MetricAccumulator::new(0),
            post: MetricAccumulator::new(0),
        }
    }

    fn push(&mut self, post: bool, y: f64, y_hat: f64, p: Option<f64>) -> Result<()> {
        self.all.push(y, y_hat, p)?;
        if post { &mut self.post } else { &mut self.pre }.push(y, y_hat, p)
    }

    fn split(&self) -> SplitMetrics {
        SplitMetrics {
            mape: self.all.mape(),
            nll: self.all.nll(),
            pre_mape: self.pre.mape(),
            post_mape: self.post.mape(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Pending {
    point: f64,
    dist: Vec<f64>,
}

/// Resumable state of a taxi run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxiCheckpoint {
    pub config: RunConfig,
    pub position: usize,
    pub tm: String,
    pub classifier: SoftmaxClassifier,
    pending: Vec<Option<Pending>>,
    scores: Scores,
    curve: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct TaxiRun {
    cfg: RunConfig,
    rows: Vec<TaxiRow>,
    skipped: usize,
    model: TaxiModel,
    t: usize,
    lookahead: usize,
    eval_start: usize,
    perturb_start: Option<usize>,
    /// Prediction made at row `s` for row `s + lookahead`, in slot
    /// `s % lookahead`.
    pending: Vec<Option<Pending>>,
    scores: Scores,
    /// Trailing-window MAPE after each row.
    curve: Vec<Option<f64>>,
}

impl TaxiRun {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (rows, skipped) = series_for(cfg)?;
        Self::with_rows(cfg, rows, skipped)
    }

    pub fn with_rows(cfg: &RunConfig, rows: Vec<TaxiRow>, skipped: usize) -> Result<Self> {
        let t = &cfg.taxi;
        let lookahead = t.classifier.lookahead.max(1);
        let perturb_start = t.perturbation.as_ref().map(|p| {
            let start = p.start.and_hms_opt(0, 0, 0).expect("midnight");
            rows.partition_point(|r| r.timestamp < start)
        });
        Ok(TaxiRun {
            model: TaxiModel::new(cfg)?,
            cfg: cfg.clone(),
            skipped,
            t: 0,
            lookahead,
            eval_start: t.warmup_weeks * WEEK,
            perturb_start,
            pending: vec![None; lookahead],
            scores: Scores::new(t.trailing_window),
            curve: Vec::with_capacity(rows.len()),
            rows,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn rows(&self) -> &[TaxiRow] {
        &self.rows
    }

    pub fn model(&self) -> &TaxiModel {
        &self.model
    }

    pub fn position(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.rows.len()
    }

    /// Trailing-window MAPE after each row so far.
    pub fn curve(&self) -> &[Option<f64>] {
        &self.curve
    }

    fn is_post(&self, t: usize) -> bool {
        self.perturb_start.is_some_and(|s| t >= s)
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let t = self.t;
        let row = *self.rows.get(t).ok_or_else(|| Error::Data("series exhausted".into()))?;
        let y = row.count as f64;
        let slot = t % self.lookahead;
        let bucket = self.model.buckets.bucketize(y)?;

        // Score the forecast made `lookahead` rows ago before learning from y.
        if let Some(p) = self.pending[slot].take() {
            if t >= self.eval_start {
                let post = self.is_post(t);
                self.scores.push(post, y, p.point, Some(p.dist[bucket]))?;
            }
        }

        let input = self.model.encode(row.timestamp, y)?;
        let columns = self.model.pooler.pool(&input)?;
        self.model.tm.step(&columns, true)?;
        let cells = self.model.tm.active_cells_sdr();
        let dist = self.model.classifier.compute(&cells, Some(bucket), true)?;
        let point = self.cfg.taxi.point.point(&dist, &self.model.buckets)?;
        self.pending[slot] = Some(Pending { point, dist: dist.clone() });

        let window = (t >= self.eval_start).then(|| self.scores.all.window_mape()).flatten();
        self.curve.push(window);
        self.t += 1;

        let mut rec = StepRecord::new(t);
        rec.timestamp = Some(row.timestamp.format("%Y-%m-%d %H:%M").to_string());
        rec.value = Some(y);
        rec.prediction = Some(point);
        rec.distribution = Some(dist);
        rec.mape = window;
        rec.nll = (t >= self.eval_start).then(|| self.scores.all.window_nll()).flatten();
        Ok(rec)
    }

    pub fn run_to_end(&mut self, mut sink: impl FnMut(&StepRecord) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let rec = self.step()?;
            sink(&rec)?;
        }
        Ok(())
    }

    /// Naive and seasonal baselines scored on the same rows.
    pub fn baselines(&self) -> Result<(SplitMetrics, SplitMetrics)> {
        let values: Vec<f64> = self.rows.iter().map(|r| r.count as f64).collect();
        let score = |fc: Vec<Option<f64>>| -> Result<SplitMetrics> {
            let mut s = Scores::new(0);
            for (t, f) in fc.into_iter().enumerate().skip(self.eval_start) {
                if let Some(f) = f {
                    s.push(self.is_post(t), values[t], f, None)?;
                }
            }
            Ok(s.split())
        };
        let naive = score(taxi::naive_forecast(&values, self.lookahead))?;
        let seasonal = score(taxi::seasonal_forecast(&values, WEEK)?)?;
        Ok((naive, seasonal))
    }

    fn recovery(&self) -> Option<RecoverySummary> {
        let start = self.perturb_start?;
        let pre_level = (*self.curve.get(start.checked_sub(1)?)?)?;
        let horizon = (start + 3 * WEEK).min(self.curve.len());
        let (peak_index, peak) = (start..horizon)
            .filter_map(|i| self.curve[i].map(|v| (i, v)))
            .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((i, v)),
            })?;
        let recovered_index = (peak_index..self.curve.len()).find(|&i| self.curve[i].is_some_and(|v| v <= 1.1 * pre_level));
        Some(RecoverySummary {
            start,
            pre_level,
            peak,
            peak_index,
            recovered_index,
            weeks_to_recover: recovered_index.map(|i| (i - start) as f64 / WEEK as f64),
        })
    }

    pub fn summary(&self) -> Result<TaxiSummary> {
        let (naive, seasonal) = self.baselines()?;
        let own = self.scores.split();
        Ok(TaxiSummary {
            seed: self.cfg.seed,
            rows: self.rows.len(),
            skipped_rows: self.skipped,
            eval_start: self.eval_start,
            evaluated: self.scores.all.count(),
            mape: own.mape,
            nll: own.nll,
            uniform_nll: (self.model.buckets.num_buckets() as f64).ln(),
            pre_mape: own.pre_mape,
            post_mape: own.post_mape,
            naive,
            seasonal,
            recovery: self.recovery(),
        })
    }

    pub fn checkpoint(&self) -> TaxiCheckpoint {
        TaxiCheckpoint {
            config: self.cfg.clone(),
            position: self.t,
            tm: self.model.tm.to_snapshot(),
            classifier: self.model.classifier.clone(),
            pending: self.pending.clone(),
            scores: self.scores.clone(),
            curve: self.curve.clone(),
        }
    }

    pub fn from_checkpoint(cp: &TaxiCheckpoint) -> Result<Self> {
        let mut run = TaxiRun::new(&cp.config)?;
        if cp.position > run.rows.len() || cp.curve.len() != cp.position || cp.pending.len() != run.lookahead {
            return Err(Error::Snapshot("checkpoint does not fit the configured series".into()));
        }
        let tm = TemporalMemory::from_snapshot(&cp.tm)?;
        if tm.params() != run.model.tm.params() {
            return Err(Error::Snapshot("network parameters do not match the config".into()));
        }
        if cp.classifier.input_width() != tm.num_cells() || cp.classifier.params() != &cp.config.taxi.classifier {
            return Err(Error::Snapshot("classifier does not match the config".into()));
        }
        run.model.tm = tm;
        run.model.classifier = cp.classifier.clone();
        run.t = cp.position;
        run.pending = cp.pending.clone();
        run.scores = cp.scores.clone();
        run.curve = cp.curve.clone();
        Ok(run)
    }
}

/// One full taxi run.
pub fn run_taxi(cfg: &RunConfig, sink: impl FnMut(&StepRecord) -> Result<()>) -> Result<(TaxiRun, TaxiSummary)> {
    let mut run = TaxiRun::new(cfg)?;
    run.run_to_end(sink)?;
    let summary = run.summary()?;
    Ok((run, summary))
}
