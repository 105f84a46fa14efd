//! Accuracy metrics, rolling-origin evaluation and inference latency.

mod bench;
mod report;

use std::ops::Range;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::features::{build_windows, FeatureError, FeatureFrame, Segment, WindowSample};
use crate::forecast::{ForecastError, Forecaster};

pub use bench::{bench_inference, BusyWaitStub, LatencyStats, DEFAULT_RUNS, DEFAULT_WARMUP};
pub use report::{export_report, read_report, InsightDocument, CSV_HEADER};

pub const EVAL_SCHEMA: u32 = 1;
pub const CV_RMSE_LIMIT: f64 = 20.0;
pub const NMBE_LIMIT: f64 = 5.0;
/// Below this absolute mean the percentage metrics are reported as unstable.
pub const UNSTABLE_MEAN: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("mean of the actual values is zero")]
    ZeroMean,
    #[error("length mismatch: {actual} actual vs {predicted} predicted values")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("no values to score")]
    Empty,
    #[error("segment of {len} steps cannot hold a window of {needed}")]
    SegmentTooShort { len: usize, needed: usize },
    #[error("benchmark needs at least 30 timed runs, got {0}")]
    TooFewRuns(usize),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Feature(FeatureError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("report format: {0}")]
    Format(String),
}

impl From<FeatureError> for EvalError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::SegmentTooShort { len, needed } => EvalError::SegmentTooShort { len, needed },
            other => EvalError::Feature(other),
        }
    }
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

fn checked_mean(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    if mean == 0.0 {
        return Err(EvalError::ZeroMean);
    }
    Ok(mean)
}

/// Coefficient of variation of the RMSE, in percent of the mean actual value.
pub fn cv_rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    let mean = checked_mean(actual, predicted)?;
    let sse: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(100.0 * (sse / actual.len() as f64).sqrt() / mean)
}

/// Normalized mean bias error in percent; over-prediction is positive.
pub fn nmbe(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    let mean = checked_mean(actual, predicted)?;
    let bias: f64 = actual.iter().zip(predicted).map(|(y, p)| p - y).sum();
    Ok(100.0 * (bias / actual.len() as f64) / mean)
}

/// Anything that forecasts one window at a time.
pub trait Predictor {
    fn label(&self) -> String;
    /// Identifies the exact parameters, when there are any.
    fn fingerprint(&self) -> Option<String> {
        None
    }
    fn predict_window(&self, sample: &WindowSample<'_>) -> Result<Vec<f64>, ForecastError>;
}

impl Predictor for Forecaster {
    fn label(&self) -> String {
        self.architecture().to_string()
    }

    fn fingerprint(&self) -> Option<String> {
        (self.parameter_count() > 0).then(|| self.weights_digest())
    }

    fn predict_window(&self, sample: &WindowSample<'_>) -> Result<Vec<f64>, ForecastError> {
        self.predict(sample)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledMetrics {
    pub cv_rmse: f64,
    pub nmbe: f64,
    pub mean_actual: f64,
    pub points: usize,
    pub passes: bool,
    pub metric_unstable: bool,
}

impl PooledMetrics {
    fn compute(actual: &[f64], predicted: &[f64]) -> Result<Self> {
        let cv = cv_rmse(actual, predicted)?;
        let nm = nmbe(actual, predicted)?;
        let mean = actual.iter().sum::<f64>() / actual.len() as f64;
        Ok(PooledMetrics {
            cv_rmse: cv,
            nmbe: nm,
            mean_actual: mean,
            points: actual.len(),
            passes: passes(cv, nm),
            metric_unstable: mean.abs() < UNSTABLE_MEAN,
        })
    }
}

pub fn passes(cv_rmse: f64, nmbe: f64) -> bool {
    nmbe.abs() <= NMBE_LIMIT && cv_rmse <= CV_RMSE_LIMIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginResult {
    /// Timestamp of the first forecast step.
    pub origin: DateTime<Utc>,
    /// Frame index of the first forecast step.
    pub index: usize,
    /// `None` when the window's actual mean is exactly zero.
    pub cv_rmse: Option<f64>,
    pub nmbe: Option<f64>,
    pub mean_actual: f64,
    pub metric_unstable: bool,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub model: String,
    pub model_fingerprint: Option<String>,
    pub target: String,
    pub manifest_hash: String,
    pub segment: Segment,
    pub segment_start: DateTime<Utc>,
    pub segment_len: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub cv_rmse_max: f64,
    pub nmbe_abs_max: f64,
}

impl Default for Criteria {
    fn default() -> Self {
        Criteria {
            cv_rmse_max: CV_RMSE_LIMIT,
            nmbe_abs_max: NMBE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eval_schema: u32,
    pub config: EvalConfig,
    pub criteria: Criteria,
    pub origins: usize,
    pub pooled: PooledMetrics,
    /// Mean of the per-origin values, skipping origins without a metric.
    pub mean_origin_cv_rmse: Option<f64>,
    pub mean_origin_nmbe: Option<f64>,
    pub per_origin: Vec<OriginResult>,
}

impl EvalReport {
    pub fn passes(&self) -> bool {
        self.pooled.passes
    }

    /// Canonical JSON; identical inputs give identical bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Forecasts every window of `segment` (origins `stride` apart) and scores
/// them pooled over all (origin, step) pairs and per origin.
pub fn rolling_evaluate<P: Predictor + ?Sized>(
    model: &P,
    frame: &Arc<FeatureFrame>,
    segment: Segment,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<EvalReport> {
    let range: Range<usize> = frame.segment_range(segment);
    let windows = build_windows(frame.clone(), range.clone(), lookback, horizon, stride)?;
    let mut per_origin = Vec::with_capacity(windows.len());
    let mut all_actual = Vec::with_capacity(windows.len() * horizon);
    let mut all_pred = Vec::with_capacity(windows.len() * horizon);
    for sample in windows.samples() {
        let predicted = model.predict_window(&sample)?;
        let actual = sample.future_target().to_vec();
        if predicted.len() != actual.len() {
            return Err(EvalError::LengthMismatch {
                actual: actual.len(),
                predicted: predicted.len(),
            });
        }
        let mean = actual.iter().sum::<f64>() / actual.len() as f64;
        all_actual.extend_from_slice(&actual);
        all_pred.extend_from_slice(&predicted);
        per_origin.push(OriginResult {
            origin: frame.timestamp(sample.origin_index()),
            index: sample.origin_index(),
            cv_rmse: cv_rmse(&actual, &predicted).ok(),
            nmbe: nmbe(&actual, &predicted).ok(),
            mean_actual: mean,
            metric_unstable: mean.abs() < UNSTABLE_MEAN,
            actual,
            predicted,
        });
    }
    let pooled = PooledMetrics::compute(&all_actual, &all_pred)?;
    Ok(EvalReport {
        eval_schema: EVAL_SCHEMA,
        config: EvalConfig {
            model: model.label(),
            model_fingerprint: model.fingerprint(),
            target: frame.target_id().to_string(),
            manifest_hash: windows.manifest().hash(),
            segment,
            segment_start: frame.timestamp(range.start),
            segment_len: range.len(),
            lookback,
            horizon,
            stride,
        },
        criteria: Criteria::default(),
        origins: per_origin.len(),
        pooled,
        mean_origin_cv_rmse: mean_of(per_origin.iter().filter_map(|o| o.cv_rmse)),
        mean_origin_nmbe: mean_of(per_origin.iter().filter_map(|o| o.nmbe)),
        per_origin,
    })
}
