use serde::{Deserialize, Serialize};

use super::{RegularSeries, Result, SeriesError};

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitSpec {
    /// 80:10:10.
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            valid_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let s = Self {
            train_fraction: train,
            valid_fraction: valid,
            test_fraction: test,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train_fraction, self.valid_fraction, self.test_fraction];
        if parts.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(SeriesError::InvalidSplit(format!(
                "fractions must be positive: {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SeriesError::InvalidSplit(format!("fractions must sum to 1: {parts:?}")));
        }
        Ok(())
    }

    /// End indices of the train and validation segments for a series of `len` points:
    /// `floor(cumulative fraction * len)`.
    pub fn boundaries(&self, len: usize) -> Result<(usize, usize)> {
        self.validate()?;
        if len < 3 {
            return Err(SeriesError::TooShort { len });
        }
        // The nudge keeps e.g. (0.7 + 0.2) * 10 from flooring to 8.
        let cut = |f: f64| ((f * len as f64) + 1e-9).floor() as usize;
        let a = cut(self.train_fraction);
        let b = cut(self.train_fraction + self.valid_fraction).min(len);
        if a == 0 || b <= a || b >= len {
            return Err(SeriesError::TooShort { len });
        }
        Ok((a, b))
    }
}

/// Contiguous, non-overlapping train/validation/test segments in time order.
pub fn split_chronological(
    series: &RegularSeries,
    spec: &SplitSpec,
) -> Result<(RegularSeries, RegularSeries, RegularSeries)> {
    let (a, b) = spec.boundaries(series.len())?;
    Ok((
        series.segment(0, a)?,
        series.segment(a, b)?,
        series.segment(b, series.len())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::local_datetime;
    use crate::twin::Unit;

    fn series(n: usize) -> RegularSeries {
        let tz = chrono_tz::Europe::Stockholm;
        RegularSeries::new(
            "s",
            Unit::Celsius,
            local_datetime(tz, 2023, 1, 1, 0),
            tz,
            (0..n).map(|i| i as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn eighty_ten_ten() {
        let (a, b, c) = split_chronological(&series(100), &SplitSpec::default()).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
        assert_eq!(b.start(), a.end());
        assert_eq!(c.values()[0], 90.0);
        let (a, b, c) = split_chronological(&series(10), &SplitSpec::default()).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
    }

    #[test]
    fn too_short_and_invalid_specs() {
        assert!(matches!(
            split_chronological(&series(2), &SplitSpec::default()),
            Err(SeriesError::TooShort { len: 2 })
        ));
        assert!(SplitSpec::new(0.5, 0.5, 0.0).is_err());
        assert!(SplitSpec::new(0.5, 0.3, 0.3).is_err());
        assert_eq!(SplitSpec::new(0.7, 0.2, 0.1).unwrap().boundaries(10).unwrap(), (7, 9));
    }
}
