//! Calendar features, cyclical encodings, min-max scaling, and windowed samples.

use std::ops::Range;

use chrono::{DateTime, Duration, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::series::weather::WeatherVariable;
use crate::series::{RegularSeries, SplitSpec};
use crate::twin::Unit;

mod calendar;
mod scale;
mod window;

pub use calendar::{calendar_features, encode_cyclical, CalendarFeatures, HolidayCalendar};
pub use scale::MinMaxScaler;
pub use window::{build_windows, split_windows, DatasetManifest, WindowSample, WindowedDataset};

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("unknown timezone {0:?}")]
    UnknownTimezone(String),
    #[error("period must be positive, got {0}")]
    NonpositivePeriod(f64),
    #[error("cannot fit a scaler on an empty training set")]
    EmptyTrain,
    #[error("non-finite value in scaler input")]
    NonFinite,
    #[error("segment of {len} hours is shorter than lookback + horizon = {needed}")]
    SegmentTooShort { len: usize, needed: usize },
    #[error("invalid window parameters: {0}")]
    InvalidWindow(String),
    #[error("missing covariate series {0:?}")]
    MissingCovariate(String),
    #[error("series are not time-aligned: {0}")]
    Misaligned(String),
    #[error("holiday file line {line}: {message}")]
    HolidayParse { line: usize, message: String },
    #[error("scalers do not match the frame: {0}")]
    ScalerMismatch(String),
    #[error(transparent)]
    Series(#[from] crate::series::SeriesError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

/// How a covariate column is produced from raw data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Weather(WeatherVariable),
    WindSin,
    WindCos,
    Holiday,
    Weekend,
    HourSin,
    HourCos,
    WeekdaySin,
    WeekdayCos,
}

impl Column {
    fn name(self) -> &'static str {
        match self {
            Column::Weather(v) => v.series_id(),
            Column::WindSin => "wind_direction_sin",
            Column::WindCos => "wind_direction_cos",
            Column::Holiday => "is_holiday",
            Column::Weekend => "is_weekend",
            Column::HourSin => "hour_sin",
            Column::HourCos => "hour_cos",
            Column::WeekdaySin => "weekday_sin",
            Column::WeekdayCos => "weekday_cos",
        }
    }

    /// Continuous meteorological columns are min-max scaled; flags and
    /// sine/cosine pairs pass through unchanged.
    fn scaled(self) -> bool {
        matches!(self, Column::Weather(_))
    }
}

const COLUMNS: [Column; 14] = [
    Column::Weather(WeatherVariable::AirTemperature),
    Column::Weather(WeatherVariable::RelativeHumidity),
    Column::Weather(WeatherVariable::DewPoint),
    Column::Weather(WeatherVariable::Precipitation),
    Column::Weather(WeatherVariable::WindSpeed),
    Column::WindSin,
    Column::WindCos,
    Column::Weather(WeatherVariable::GlobalIrradiance),
    Column::Holiday,
    Column::Weekend,
    Column::HourSin,
    Column::HourCos,
    Column::WeekdaySin,
    Column::WeekdayCos,
];

/// Covariate names in column order. Past and future covariates share this set.
pub fn covariate_names() -> Vec<String> {
    COLUMNS.iter().map(|c| c.name().to_string()).collect()
}

/// Scalers fitted on the training segment; reused verbatim at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScalers {
    pub target: MinMaxScaler,
    /// One entry per covariate column, `None` for unscaled columns.
    pub covariates: Vec<Option<MinMaxScaler>>,
}

/// Which chronological segment of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Train,
    Valid,
    Test,
}

/// Target and covariates on one hourly grid, scaled, with split boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    target_id: String,
    target_unit: Unit,
    start: DateTime<Utc>,
    timezone: Tz,
    covariate_names: Vec<String>,
    target_raw: Vec<f64>,
    target_scaled: Vec<f64>,
    /// Row-major `len x covariate count`.
    covariates: Vec<f64>,
    scalers: FrameScalers,
    boundaries: (usize, usize),
}

struct Aligned {
    start: DateTime<Utc>,
    timezone: Tz,
    target: Vec<f64>,
    raw_covariates: Vec<Vec<f64>>,
}

fn align(target: &RegularSeries, weather: &[RegularSeries], holidays: &HolidayCalendar) -> Result<Aligned> {
    let find = |v: WeatherVariable| {
        weather
            .iter()
            .find(|s| s.series_id() == v.series_id())
            .ok_or_else(|| FeatureError::MissingCovariate(v.series_id().to_string()))
    };
    let sources: Vec<&RegularSeries> = WeatherVariable::ALL.iter().map(|&v| find(v)).collect::<Result<_>>()?;
    let start = sources.iter().map(|s| s.start()).fold(target.start(), DateTime::max);
    let end = sources.iter().map(|s| s.end()).fold(target.end(), DateTime::min);
    if end <= start {
        return Err(FeatureError::Misaligned(format!(
            "target {} and weather series do not overlap",
            target.series_id()
        )));
    }
    let len = (end - start).num_hours() as usize;
    let slice = |s: &RegularSeries| -> Result<Vec<f64>> {
        let i = s
            .index_of(start)
            .ok_or_else(|| FeatureError::Misaligned(format!("{} has no value on the hour {start}", s.series_id())))?;
        Ok(s.values()[i..i + len].to_vec())
    };
    let target_values = slice(target)?;
    let weather_values: Vec<Vec<f64>> = sources.iter().map(|s| slice(s)).collect::<Result<_>>()?;
    let timestamps: Vec<DateTime<Utc>> = (0..len).map(|i| start + Duration::hours(i as i64)).collect();
    let tz = target.timezone();
    let cal = calendar_features(&timestamps, tz.name(), holidays)?;
    let weather_of = |v: WeatherVariable| {
        let idx = WeatherVariable::ALL
            .iter()
            .position(|&w| w == v)
            .expect("known variable");
        &weather_values[idx]
    };
    let cyc = |xs: Vec<f64>, period: f64, take_sin: bool| -> Vec<f64> {
        xs.into_iter()
            .map(|x| {
                let (s, c) = encode_cyclical(x, period).expect("positive period");
                if take_sin {
                    s
                } else {
                    c
                }
            })
            .collect()
    };
    let raw_covariates = COLUMNS
        .iter()
        .map(|&col| match col {
            Column::Weather(v) => weather_of(v).clone(),
            Column::WindSin => cyc(weather_of(WeatherVariable::WindDirection).clone(), 360.0, true),
            Column::WindCos => cyc(weather_of(WeatherVariable::WindDirection).clone(), 360.0, false),
            Column::Holiday => cal.iter().map(|c| c.is_holiday as f64).collect(),
            Column::Weekend => cal.iter().map(|c| c.is_weekend as f64).collect(),
            Column::HourSin => cyc(cal.iter().map(|c| c.hour as f64).collect(), 24.0, true),
            Column::HourCos => cyc(cal.iter().map(|c| c.hour as f64).collect(), 24.0, false),
            Column::WeekdaySin => cyc(cal.iter().map(|c| c.weekday as f64).collect(), 7.0, true),
            Column::WeekdayCos => cyc(cal.iter().map(|c| c.weekday as f64).collect(), 7.0, false),
        })
        .collect();
    Ok(Aligned {
        start,
        timezone: tz,
        target: target_values,
        raw_covariates,
    })
}

impl FeatureFrame {
    /// Aligns the target with the seven weather series (cropping to their
    /// common span), derives calendar columns, and fits scalers on the
    /// training segment only.
    pub fn build(
        target: &RegularSeries,
        weather: &[RegularSeries],
        holidays: &HolidayCalendar,
        split: &SplitSpec,
    ) -> Result<Self> {
        let aligned = align(target, weather, holidays)?;
        let (a, _) = split.boundaries(aligned.target.len())?;
        let scalers = FrameScalers {
            target: MinMaxScaler::fit(&aligned.target[..a])?,
            covariates: COLUMNS
                .iter()
                .zip(&aligned.raw_covariates)
                .map(|(col, xs)| col.scaled().then(|| MinMaxScaler::fit(&xs[..a])).transpose())
                .collect::<Result<_>>()?,
        };
        Self::assemble(target, aligned, split, scalers)
    }

    /// Same as [`FeatureFrame::build`] but with scalers fitted elsewhere,
    /// e.g. those stored alongside a trained model.
    pub fn build_with_scalers(
        target: &RegularSeries,
        weather: &[RegularSeries],
        holidays: &HolidayCalendar,
        split: &SplitSpec,
        scalers: &FrameScalers,
    ) -> Result<Self> {
        if scalers.covariates.len() != COLUMNS.len() {
            return Err(FeatureError::ScalerMismatch(format!(
                "{} covariate scalers for {} columns",
                scalers.covariates.len(),
                COLUMNS.len()
            )));
        }
        let aligned = align(target, weather, holidays)?;
        Self::assemble(target, aligned, split, scalers.clone())
    }

    fn assemble(target: &RegularSeries, aligned: Aligned, split: &SplitSpec, scalers: FrameScalers) -> Result<Self> {
        let len = aligned.target.len();
        let boundaries = split.boundaries(len)?;
        let c = COLUMNS.len();
        let mut covariates = vec![0.0; len * c];
        for (j, (xs, scaler)) in aligned.raw_covariates.iter().zip(&scalers.covariates).enumerate() {
            for (i, &x) in xs.iter().enumerate() {
                covariates[i * c + j] = scaler.map_or(x, |s| s.transform(x));
            }
        }
        Ok(Self {
            target_id: target.series_id().to_string(),
            target_unit: target.unit(),
            start: aligned.start,
            timezone: aligned.timezone,
            covariate_names: covariate_names(),
            target_scaled: scalers.target.transform_all(&aligned.target),
            target_raw: aligned.target,
            covariates,
            scalers,
            boundaries,
        })
    }

    pub fn len(&self) -> usize {
        self.target_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_raw.is_empty()
    }

    pub fn target_id(&self) -> &str {
        &self.target_id
    }

    pub fn target_unit(&self) -> Unit {
        self.target_unit
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn timezone(&self) -> Tz {
        self.timezone
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::hours(i as i64)
    }

    pub fn index_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let d = t - self.start;
        if d < Duration::zero() || d != Duration::hours(d.num_hours()) {
            return None;
        }
        let i = d.num_hours() as usize;
        (i < self.len()).then_some(i)
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn num_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn target_raw(&self) -> &[f64] {
        &self.target_raw
    }

    pub fn target_scaled(&self) -> &[f64] {
        &self.target_scaled
    }

    /// Row-major `len x num_covariates`, already scaled.
    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn scalers(&self) -> &FrameScalers {
        &self.scalers
    }

    /// Names of columns whose training range was a single value.
    pub fn degenerate_columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.scalers.target.degenerate {
            out.push(self.target_id.clone());
        }
        for (name, s) in self.covariate_names.iter().zip(&self.scalers.covariates) {
            if s.is_some_and(|s| s.degenerate) {
                out.push(name.clone());
            }
        }
        out
    }

    pub fn boundaries(&self) -> (usize, usize) {
        self.boundaries
    }

    pub fn segment_range(&self, segment: Segment) -> Range<usize> {
        let (a, b) = self.boundaries;
        match segment {
            Segment::Train => 0..a,
            Segment::Valid => a..b,
            Segment::Test => b..self.len(),
        }
    }
}
