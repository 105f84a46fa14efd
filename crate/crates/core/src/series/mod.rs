//! Raw observation ingestion and the canonical hourly series.

mod ingest;
mod resample;
mod split;
pub mod weather;

use std::io::{Read, Write};

use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::twin::Unit;

pub use ingest::{drop_invalid, ingest_csv, ColumnMap, IngestReport};
pub use resample::{fill_gaps_linear, resample_hourly_mean, HourlyBuckets, DEFAULT_MAX_GAP_HOURS};
pub use split::{split_chronological, SplitSpec};

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("series is empty")]
    EmptySeries,
    #[error("missing value at series boundary (hour index {index})")]
    BoundaryGap { index: usize },
    #[error("gap of {length} hours starting at hour index {start} exceeds the interpolation limit")]
    GapTooLong { start: usize, length: usize },
    #[error("series of length {len} is too short to split")]
    TooShort { len: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("unknown timezone {0:?}")]
    UnknownTimezone(String),
    #[error("invalid series: {0}")]
    Invalid(String),
    #[error("weather endpoint unreachable after {attempts} attempt(s): {message}")]
    ConnectorUnreachable { attempts: u32, message: String },
    #[error("weather payload does not match the expected schema: {0}")]
    PayloadSchemaError(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SeriesError> = std::result::Result<T, E>;

pub fn parse_timezone(name: &str) -> Result<Tz> {
    name.parse::<Tz>()
        .map_err(|_| SeriesError::UnknownTimezone(name.to_string()))
}

/// One reading; `value` is `None` when the source marked it missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub timestamp: DateTime<Utc>,
    pub value: Option<f64>,
}

/// Time-ordered raw readings with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    series_id: String,
    unit: Unit,
    observations: Vec<Observation>,
}

impl RawSeries {
    pub fn new(series_id: impl Into<String>, unit: Unit, observations: Vec<Observation>) -> Result<Self> {
        if observations.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
            return Err(SeriesError::Invalid("timestamps must be strictly increasing".into()));
        }
        if observations.iter().any(|o| o.value.is_some_and(|v| !v.is_finite())) {
            return Err(SeriesError::Invalid("values must be finite or missing".into()));
        }
        Ok(Self {
            series_id: series_id.into(),
            unit,
            observations,
        })
    }

    pub fn series_id(&self) -> &str {
        &self.series_id
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Physical plausibility range for a unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityBounds {
    pub min: f64,
    pub max: f64,
}

impl ValidityBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min < max) {
            return Err(SeriesError::Invalid(format!("bounds [{min}, {max}] are empty")));
        }
        Ok(Self { min, max })
    }

    /// Default sensor ranges; `None` for units that are never filtered.
    pub fn for_unit(unit: Unit) -> Option<Self> {
        match unit {
            Unit::Celsius => Some(Self { min: -40.0, max: 60.0 }),
            Unit::PercentRh => Some(Self { min: 0.0, max: 100.0 }),
            Unit::Ppm => Some(Self {
                min: 300.0,
                max: 10_000.0,
            }),
            _ => None,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Gap-free hourly series starting on a local hour boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularSeries {
    series_id: String,
    unit: Unit,
    start: DateTime<Utc>,
    timezone: Tz,
    values: Vec<f64>,
}

impl RegularSeries {
    pub fn new(
        series_id: impl Into<String>,
        unit: Unit,
        start: DateTime<Utc>,
        timezone: Tz,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(SeriesError::EmptySeries);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::Invalid(format!("non-finite value at hour {i}")));
        }
        let local = start.with_timezone(&timezone);
        if local.minute() != 0 || local.second() != 0 || local.nanosecond() != 0 {
            return Err(SeriesError::Invalid(format!(
                "start {start} is not on an hour boundary in {timezone}"
            )));
        }
        Ok(Self {
            series_id: series_id.into(),
            unit,
            start,
            timezone,
            values,
        })
    }

    pub fn series_id(&self) -> &str {
        &self.series_id
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn timezone(&self) -> Tz {
        self.timezone
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    /// One hour past the last value.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.values.len())
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        (0..self.len()).map(|i| self.timestamp(i)).collect()
    }

    /// Hour index of `t`, if it lies on the grid inside the series.
    pub fn index_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let secs = (t - self.start).num_seconds();
        if secs < 0 || secs % 3600 != 0 {
            return None;
        }
        let i = (secs / 3600) as usize;
        (i < self.len()).then_some(i)
    }

    /// Contiguous sub-series `[from, to)`.
    pub fn segment(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return Err(SeriesError::Invalid(format!(
                "segment [{from}, {to}) out of range for length {}",
                self.len()
            )));
        }
        Self::new(
            self.series_id.clone(),
            self.unit,
            self.timestamp(from),
            self.timezone,
            self.values[from..to].to_vec(),
        )
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.series_id = id.into();
        self
    }

    /// Canonical CSV: header `timestamp,value`, RFC 3339 UTC timestamps.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestamp", "value"]).map_err(csv_io)?;
        for (i, v) in self.values.iter().enumerate() {
            let ts = self.timestamp(i).to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
            w.write_record([ts, format!("{v}")]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a canonical CSV back; the grid must be hourly and gap-free.
    pub fn read_csv<R: Read>(input: R, series_id: impl Into<String>, unit: Unit, timezone: Tz) -> Result<Self> {
        let series_id = series_id.into();
        let (raw, _) = ingest_csv(input, &ColumnMap::default(), timezone, series_id.clone(), unit)?;
        let obs = raw.observations();
        let first = obs.first().ok_or(SeriesError::EmptySeries)?;
        let mut values = Vec::with_capacity(obs.len());
        for (i, o) in obs.iter().enumerate() {
            if o.timestamp != first.timestamp + Duration::hours(i as i64) {
                return Err(SeriesError::Invalid(format!("row {} breaks the hourly grid", i + 1)));
            }
            values.push(o.value.ok_or_else(|| SeriesError::Parse {
                row: i + 1,
                message: "missing value in canonical series".into(),
            })?);
        }
        Self::new(series_id, unit, first.timestamp, timezone, values)
    }
}

/// Start of the local-time hour containing `t`, as a UTC instant.
pub fn local_hour_floor(t: DateTime<Utc>, tz: Tz) -> DateTime<Utc> {
    let local = t.with_timezone(&tz);
    let floored = local
        - Duration::minutes(local.minute() as i64)
        - Duration::seconds(local.second() as i64)
        - Duration::nanoseconds(local.nanosecond() as i64);
    floored.with_timezone(&Utc)
}

/// Local midnight of a calendar date as UTC, for building test fixtures.
pub fn local_datetime(tz: Tz, y: i32, m: u32, d: u32, h: u32) -> DateTime<Utc> {
    tz.with_ymd_and_hms(y, m, d, h, 0, 0)
        .earliest()
        .expect("valid local time")
        .with_timezone(&Utc)
}

fn csv_io(e: csv::Error) -> SeriesError {
    SeriesError::Io(std::io::Error::other(e))
}

/// Cleaning summary for one series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows: usize,
    pub duplicates: usize,
    pub missing_readings: usize,
    pub removed_invalid: usize,
    pub hours: usize,
    pub filled_hours: usize,
}

/// Whether readings come from our own sensors or a validated meteorological provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Indoor,
    Weather,
}

/// Indoor: bounds filter, hourly mean, linear gap fill.
/// Weather: hourly mean and gap fill only; the provider already validated it.
pub fn canonicalize(
    raw: &RawSeries,
    kind: SeriesKind,
    timezone: Tz,
    max_gap: usize,
) -> Result<(RegularSeries, CleaningReport)> {
    let mut report = CleaningReport {
        rows: raw.len(),
        missing_readings: raw.observations().iter().filter(|o| o.value.is_none()).count(),
        ..CleaningReport::default()
    };
    let filtered;
    let source = match (kind, ValidityBounds::for_unit(raw.unit())) {
        (SeriesKind::Indoor, Some(bounds)) => {
            let (kept, removed) = drop_invalid(raw, &bounds);
            report.removed_invalid = removed;
            filtered = kept;
            &filtered
        }
        _ => raw,
    };
    let buckets = resample_hourly_mean(source, timezone)?;
    report.filled_hours = buckets.missing_count();
    let series = fill_gaps_linear(&buckets, max_gap)?;
    report.hours = series.len();
    Ok((series, report))
}
