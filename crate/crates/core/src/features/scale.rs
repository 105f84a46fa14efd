use serde::{Deserialize, Serialize};

use super::{FeatureError, Result};

/// Affine map of the training range onto `[0, 1]`. No clamping outside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
    /// Set when the training values were all equal; transform then yields 0.
    pub degenerate: bool,
}

impl MinMaxScaler {
    pub fn fit(train: &[f64]) -> Result<Self> {
        if train.is_empty() {
            return Err(FeatureError::EmptyTrain);
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in train {
            if !v.is_finite() {
                return Err(FeatureError::NonFinite);
            }
            min = min.min(v);
            max = max.max(v);
        }
        Ok(Self {
            min,
            max,
            degenerate: max <= min,
        })
    }

    pub fn transform(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn inverse(&self, x: f64) -> f64 {
        if self.degenerate {
            self.min
        } else {
            x * (self.max - self.min) + self.min
        }
    }

    pub fn transform_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }

    pub fn inverse_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.inverse(x)).collect()
    }
}
