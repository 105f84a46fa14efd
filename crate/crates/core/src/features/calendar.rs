use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::{FeatureError, Result};
use crate::series::parse_timezone;

const SWEDISH_HOLIDAYS: &str = include_str!("../../data/holidays_se.txt");

/// Explicit set of holiday dates, loaded from a data file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HolidayCalendar {
    dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    /// One ISO date per line; anything after `#` is a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dates = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let date = NaiveDate::parse_from_str(body, "%Y-%m-%d").map_err(|e| FeatureError::HolidayParse {
                line: i + 1,
                message: format!("{body:?}: {e}"),
            })?;
            dates.insert(date);
        }
        Ok(Self { dates })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Swedish public holidays 2023 to 2025, shipped with the crate.
    pub fn swedish() -> Self {
        Self::parse(SWEDISH_HOLIDAYS).expect("bundled holiday file parses")
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.contains(&date)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFeatures {
    pub is_holiday: u8,
    pub is_weekend: u8,
    pub hour: u32,
    /// Monday = 0.
    pub weekday: u32,
}

/// Calendar features in local time of the named timezone.
pub fn calendar_features(
    timestamps: &[DateTime<Utc>],
    timezone: &str,
    holidays: &HolidayCalendar,
) -> Result<Vec<CalendarFeatures>> {
    let tz = parse_timezone(timezone).map_err(|_| FeatureError::UnknownTimezone(timezone.to_string()))?;
    Ok(timestamps
        .iter()
        .map(|t| {
            let local = t.with_timezone(&tz);
            let weekday = local.weekday().num_days_from_monday();
            CalendarFeatures {
                is_holiday: holidays.contains(local.date_naive()) as u8,
                is_weekend: (weekday >= 5) as u8,
                hour: local.hour(),
                weekday,
            }
        })
        .collect())
}

/// `(sin(2π v/p), cos(2π v/p))`.
pub fn encode_cyclical(value: f64, period: f64) -> Result<(f64, f64)> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(FeatureError::NonpositivePeriod(period));
    }
    let angle = TAU * (value / period);
    Ok(angle.sin_cos())
}
