use chrono::{DateTime, Utc};
use chrono_tz::Tz;

use super::{local_hour_floor, RawSeries, RegularSeries, Result, SeriesError};
use crate::twin::Unit;

/// Longest run of missing hours that is interpolated rather than rejected.
pub const DEFAULT_MAX_GAP_HOURS: usize = 6;

/// Hourly means with a missing-hour mask, before gap filling.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyBuckets {
    pub series_id: String,
    pub unit: Unit,
    pub start: DateTime<Utc>,
    pub timezone: Tz,
    /// `None` where the hour had no readings.
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl HourlyBuckets {
    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

/// Arithmetic mean of the readings in each local hour `[h, h + 1)`.
///
/// The grid spans from the hour of the first present reading to the hour of the last.
pub fn resample_hourly_mean(series: &RawSeries, timezone: Tz) -> Result<HourlyBuckets> {
    let present: Vec<(DateTime<Utc>, f64)> = series
        .observations()
        .iter()
        .filter_map(|o| o.value.map(|v| (o.timestamp, v)))
        .collect();
    let (first, last) = match (present.first(), present.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(SeriesError::EmptySeries),
    };
    let start = local_hour_floor(first, timezone);
    let hours = ((local_hour_floor(last, timezone) - start).num_seconds() / 3600) as usize + 1;
    let mut sums = vec![0.0; hours];
    let mut counts = vec![0usize; hours];
    for (t, v) in present {
        let idx = ((t - start).num_seconds().div_euclid(3600)) as usize;
        sums[idx] += v;
        counts[idx] += 1;
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(HourlyBuckets {
        series_id: series.series_id().to_string(),
        unit: series.unit(),
        start,
        timezone,
        values,
        counts,
    })
}

/// Linear interpolation across runs of at most `max_gap` missing hours.
pub fn fill_gaps_linear(buckets: &HourlyBuckets, max_gap: usize) -> Result<RegularSeries> {
    let v = &buckets.values;
    let n = v.len();
    if n == 0 {
        return Err(SeriesError::EmptySeries);
    }
    if v[0].is_none() {
        return Err(SeriesError::BoundaryGap { index: 0 });
    }
    if v[n - 1].is_none() {
        return Err(SeriesError::BoundaryGap { index: n - 1 });
    }
    let mut out: Vec<f64> = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        match v[i] {
            Some(x) => {
                out.push(x);
                i += 1;
            }
            None => {
                let run_start = i;
                while v[i].is_none() {
                    i += 1;
                }
                let length = i - run_start;
                if length > max_gap {
                    return Err(SeriesError::GapTooLong {
                        start: run_start,
                        length,
                    });
                }
                let left = out[run_start - 1];
                let right = v[i].expect("run ends on a present value");
                let span = (length + 1) as f64;
                for k in 1..=length {
                    out.push(left + (right - left) * k as f64 / span);
                }
            }
        }
    }
    RegularSeries::new(
        buckets.series_id.clone(),
        buckets.unit,
        buckets.start,
        buckets.timezone,
        out,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Observation;
    use chrono::{Duration, TimeZone};
    use chrono_tz::Europe::Stockholm;

    fn raw(points: &[(i64, f64)]) -> RawSeries {
        let t0 = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
        let obs = points
            .iter()
            .map(|&(s, v)| Observation {
                timestamp: t0 + Duration::seconds(s),
                value: Some(v),
            })
            .collect();
        RawSeries::new("s", Unit::Celsius, obs).unwrap()
    }

    fn buckets(values: &[Option<f64>]) -> HourlyBuckets {
        HourlyBuckets {
            series_id: "s".into(),
            unit: Unit::Celsius,
            start: Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(),
            timezone: Stockholm,
            values: values.to_vec(),
            counts: values.iter().map(|v| v.is_some() as usize).collect(),
        }
    }

    #[test]
    fn constant_hour_of_thirty_second_readings() {
        let pts: Vec<_> = (0..120).map(|i| (i * 30, 5.0)).collect();
        let b = resample_hourly_mean(&raw(&pts), Stockholm).unwrap();
        assert_eq!(b.values, vec![Some(5.0)]);
        assert_eq!(b.counts, vec![120]);
    }

    #[test]
    fn mean_of_pair() {
        let b = resample_hourly_mean(&raw(&[(600, 4.0), (2400, 6.0)]), Stockholm).unwrap();
        assert_eq!(b.values, vec![Some(5.0)]);
    }

    #[test]
    fn empty_hours_are_masked() {
        let b = resample_hourly_mean(&raw(&[(0, 1.0), (3 * 3600 + 5, 2.0)]), Stockholm).unwrap();
        assert_eq!(b.values, vec![Some(1.0), None, None, Some(2.0)]);
        let empty = RawSeries::new("s", Unit::Celsius, vec![]).unwrap();
        assert!(matches!(
            resample_hourly_mean(&empty, Stockholm),
            Err(SeriesError::EmptySeries)
        ));
    }

    #[test]
    fn half_hour_offset_zone_buckets_on_local_hours() {
        // Kolkata is UTC+05:30, so local hours start at :30 UTC.
        let b = resample_hourly_mean(&raw(&[(0, 1.0), (1700, 3.0), (1900, 10.0)]), chrono_tz::Asia::Kolkata).unwrap();
        assert_eq!(b.values, vec![Some(2.0), Some(10.0)]);
        assert_eq!(b.start.to_rfc3339(), "2022-12-31T23:30:00+00:00");
    }

    #[test]
    fn interpolation_examples() {
        let s = fill_gaps_linear(&buckets(&[Some(10.0), None, Some(14.0)]), 6).unwrap();
        assert_eq!(s.values(), &[10.0, 12.0, 14.0]);
        let s = fill_gaps_linear(&buckets(&[Some(10.0), None, None, Some(16.0)]), 6).unwrap();
        assert_eq!(s.values(), &[10.0, 12.0, 14.0, 16.0]);
        assert!(matches!(
            fill_gaps_linear(&buckets(&[None, Some(1.0)]), 6),
            Err(SeriesError::BoundaryGap { index: 0 })
        ));
        assert!(matches!(
            fill_gaps_linear(&buckets(&[Some(1.0), None, None, None, Some(2.0)]), 2),
            Err(SeriesError::GapTooLong { start: 1, length: 3 })
        ));
    }
}
