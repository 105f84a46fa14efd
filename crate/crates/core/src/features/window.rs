use std::ops::Range;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureError, FeatureFrame, Result, Segment};
use crate::twin::Unit;

/// What a model was trained on; compared by hash before inference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub target: String,
    pub target_unit: Unit,
    pub lookback: usize,
    pub horizon: usize,
    pub covariates: Vec<String>,
}

impl DatasetManifest {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("manifest serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One (past, future) window, borrowed from its frame.
#[derive(Debug, Clone, Copy)]
pub struct WindowSample<'a> {
    frame: &'a FeatureFrame,
    start: usize,
    lookback: usize,
    horizon: usize,
}

impl<'a> WindowSample<'a> {
    /// Window whose lookback begins at frame index `start`.
    pub fn at(frame: &'a FeatureFrame, start: usize, lookback: usize, horizon: usize) -> Result<Self> {
        if lookback == 0 || horizon == 0 {
            return Err(FeatureError::InvalidWindow(
                "lookback and horizon must be positive".into(),
            ));
        }
        if start + lookback + horizon > frame.len() {
            return Err(FeatureError::InvalidWindow(format!(
                "window at {start} with {lookback}+{horizon} steps overruns a frame of {}",
                frame.len()
            )));
        }
        Ok(Self {
            frame,
            start,
            lookback,
            horizon,
        })
    }

    pub fn frame(&self) -> &'a FeatureFrame {
        self.frame
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_covariates(&self) -> usize {
        self.frame.num_covariates()
    }

    fn past(&self) -> Range<usize> {
        self.start..self.start + self.lookback
    }

    fn future(&self) -> Range<usize> {
        let o = self.start + self.lookback;
        o..o + self.horizon
    }

    /// Frame index of the first forecast step.
    pub fn origin_index(&self) -> usize {
        self.start + self.lookback
    }

    pub fn forecast_timestamps(&self) -> Vec<DateTime<Utc>> {
        self.future().map(|i| self.frame.timestamp(i)).collect()
    }

    pub fn past_target(&self) -> &'a [f64] {
        &self.frame.target_scaled()[self.past()]
    }

    pub fn past_target_raw(&self) -> &'a [f64] {
        &self.frame.target_raw()[self.past()]
    }

    pub fn future_target(&self) -> &'a [f64] {
        &self.frame.target_raw()[self.future()]
    }

    pub fn future_target_scaled(&self) -> &'a [f64] {
        &self.frame.target_scaled()[self.future()]
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            target: self.frame.target_id().to_string(),
            target_unit: self.frame.target_unit(),
            lookback: self.lookback,
            horizon: self.horizon,
            covariates: self.frame.covariate_names().to_vec(),
        }
    }

    /// Row-major `lookback x covariates`.
    pub fn past_covariates(&self) -> &'a [f64] {
        let c = self.num_covariates();
        let r = self.past();
        &self.frame.covariates()[r.start * c..r.end * c]
    }

    /// Row-major `horizon x covariates`, the observed values over the horizon.
    pub fn future_covariates(&self) -> &'a [f64] {
        let c = self.num_covariates();
        let r = self.future();
        &self.frame.covariates()[r.start * c..r.end * c]
    }
}

/// Windows drawn from one contiguous segment of a shared frame.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    frame: Arc<FeatureFrame>,
    segment: Range<usize>,
    starts: Vec<usize>,
    lookback: usize,
    horizon: usize,
}

/// `floor((len - L - H) / stride) + 1` windows, none leaving `segment`.
pub fn build_windows(
    frame: Arc<FeatureFrame>,
    segment: Range<usize>,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowedDataset> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(FeatureError::InvalidWindow(format!(
            "lookback {lookback}, horizon {horizon}, stride {stride} must all be positive"
        )));
    }
    if segment.end > frame.len() || segment.start > segment.end {
        return Err(FeatureError::InvalidWindow(format!(
            "segment {segment:?} outside a frame of {}",
            frame.len()
        )));
    }
    let len = segment.len();
    let needed = lookback + horizon;
    if len < needed {
        return Err(FeatureError::SegmentTooShort { len, needed });
    }
    let count = (len - needed) / stride + 1;
    let starts = (0..count).map(|k| segment.start + k * stride).collect();
    Ok(WindowedDataset {
        frame,
        segment,
        starts,
        lookback,
        horizon,
    })
}

/// Train, validation and test windows, each confined to its own segment.
pub fn split_windows(
    frame: Arc<FeatureFrame>,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<[WindowedDataset; 3]> {
    let make = |s| build_windows(frame.clone(), frame.segment_range(s), lookback, horizon, stride);
    Ok([make(Segment::Train)?, make(Segment::Valid)?, make(Segment::Test)?])
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn frame(&self) -> &Arc<FeatureFrame> {
        &self.frame
    }

    pub fn segment(&self) -> Range<usize> {
        self.segment.clone()
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn sample(&self, i: usize) -> WindowSample<'_> {
        WindowSample {
            frame: &self.frame,
            start: self.starts[i],
            lookback: self.lookback,
            horizon: self.horizon,
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = WindowSample<'_>> {
        (0..self.len()).map(|i| self.sample(i))
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            target: self.frame.target_id().to_string(),
            target_unit: self.frame.target_unit(),
            lookback: self.lookback,
            horizon: self.horizon,
            covariates: self.frame.covariate_names().to_vec(),
        }
    }
}
