use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EvalError, Predictor, Result};
use crate::features::WindowSample;
use crate::forecast::ForecastError;

pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_WARMUP: usize = 10;
const MIN_RUNS: usize = 30;

/// Wall-clock latency of single-window `predict` calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub model: String,
    pub mean_ms: f64,
    /// Sample standard deviation.
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub runs: usize,
    pub warmup: usize,
    /// Free text taken from configuration, not probed.
    pub hardware: String,
    pub samples_ms: Vec<f64>,
}

/// Stand-in model that spins for a fixed time and forecasts zeros.
#[derive(Debug, Clone)]
pub struct BusyWaitStub {
    pub delay: Duration,
    pub horizon: usize,
}

impl Predictor for BusyWaitStub {
    fn label(&self) -> String {
        format!("busy-wait-{}us", self.delay.as_micros())
    }

    fn predict_window(&self, _sample: &WindowSample<'_>) -> Result<Vec<f64>, ForecastError> {
        let t = Instant::now();
        while t.elapsed() < self.delay {
            std::hint::spin_loop();
        }
        Ok(vec![0.0; self.horizon])
    }
}

/// Times `runs` predictions after `warmup` untimed ones.
pub fn bench_inference<P: Predictor + ?Sized>(
    model: &P,
    sample: &WindowSample<'_>,
    runs: usize,
    warmup: usize,
    hardware: &str,
) -> Result<LatencyStats> {
    if runs < MIN_RUNS {
        return Err(EvalError::TooFewRuns(runs));
    }
    for _ in 0..warmup {
        black_box(model.predict_window(sample)?);
    }
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        black_box(model.predict_window(black_box(sample))?);
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(LatencyStats {
        model: model.label(),
        mean_ms: mean,
        std_ms: var.sqrt(),
        min_ms: samples.iter().copied().fold(f64::INFINITY, f64::min),
        max_ms: samples.iter().copied().fold(0.0, f64::max),
        runs,
        warmup,
        hardware: hardware.to_string(),
        samples_ms: samples,
    })
}
