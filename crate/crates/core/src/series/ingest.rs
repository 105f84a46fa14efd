use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::{Observation, RawSeries, Result, SeriesError, ValidityBounds};
use crate::twin::Unit;

/// Which CSV columns hold the timestamp and the reading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    pub value: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            value: "value".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    /// Rows whose timestamp repeated an earlier one; the last occurrence wins.
    pub duplicates: usize,
    pub missing: usize,
}

/// Parses an ISO 8601 timestamp. Values without an offset are local time in `tz`.
pub(crate) fn parse_timestamp(text: &str, tz: Tz) -> std::result::Result<DateTime<Utc>, String> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(text, fmt) {
            return tz
                .from_local_datetime(&naive)
                .single()
                .map(|t| t.with_timezone(&Utc))
                .ok_or_else(|| format!("local time {text:?} is ambiguous or skipped in {tz}"));
        }
    }
    Err(format!("cannot parse timestamp {text:?}"))
}

fn parse_value(text: &str) -> std::result::Result<Option<f64>, String> {
    let t = text.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("null") {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(format!("cannot parse value {t:?}")),
    }
}

/// Reads a headed CSV into a sorted, de-duplicated series.
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn ingest_csv<R: Read>(
    input: R,
    columns: &ColumnMap,
    tz: Tz,
    series_id: impl Into<String>,
    unit: Unit,
) -> Result<(RawSeries, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| SeriesError::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SeriesError::Parse {
                row: 0,
                message: format!("header has no {name:?} column"),
            })
    };
    let (ts_col, val_col) = (col(&columns.timestamp)?, col(&columns.value)?);

    let mut by_time: BTreeMap<DateTime<Utc>, Option<f64>> = BTreeMap::new();
    let mut report = IngestReport::default();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| SeriesError::Parse {
            row,
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let ts = parse_timestamp(field(ts_col), tz).map_err(|message| SeriesError::Parse { row, message })?;
        let value = parse_value(field(val_col)).map_err(|message| SeriesError::Parse { row, message })?;
        report.rows += 1;
        if by_time.insert(ts, value).is_some() {
            report.duplicates += 1;
        }
    }
    let observations: Vec<Observation> = by_time
        .into_iter()
        .map(|(timestamp, value)| Observation { timestamp, value })
        .collect();
    report.missing = observations.iter().filter(|o| o.value.is_none()).count();
    let series = RawSeries::new(series_id, unit, observations).expect("BTreeMap keys are strictly increasing");
    Ok((series, report))
}

/// Removes present readings outside `bounds`; missing readings are kept as missing.
pub fn drop_invalid(series: &RawSeries, bounds: &ValidityBounds) -> (RawSeries, usize) {
    let mut removed = 0;
    let kept: Vec<Observation> = series
        .observations()
        .iter()
        .filter(|o| match o.value {
            Some(v) if !bounds.contains(v) => {
                removed += 1;
                false
            }
            _ => true,
        })
        .copied()
        .collect();
    let out = RawSeries::new(series.series_id(), series.unit(), kept).expect("subsequence stays ordered");
    (out, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono_tz::Europe::Stockholm;

    fn ingest(text: &str) -> Result<(RawSeries, IngestReport)> {
        ingest_csv(text.as_bytes(), &ColumnMap::default(), Stockholm, "s", Unit::Celsius)
    }

    #[test]
    fn well_formed_rows() {
        let (s, r) =
            ingest("timestamp,value\n2023-01-01T00:00:00Z,1\n2023-01-01T00:00:30Z,2\n2023-01-01T00:01:00Z,3\n")
                .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(r.rows, 3);
        assert_eq!(r.duplicates, 0);
    }

    #[test]
    fn out_of_order_rows_sorted_and_duplicates_last_wins() {
        let (s, r) = ingest(
            "timestamp,value\n2023-01-01T02:00:00Z,3\n2023-01-01T00:00:00Z,1\n2023-01-01T01:00:00Z,2\n2023-01-01T00:00:00Z,9\n",
        )
        .unwrap();
        let vals: Vec<_> = s.observations().iter().map(|o| o.value.unwrap()).collect();
        assert_eq!(vals, vec![9.0, 2.0, 3.0]);
        assert_eq!(r.duplicates, 1);
    }

    #[test]
    fn malformed_timestamp_reports_row() {
        let mut text = String::from("timestamp,value\n");
        for h in 0..6 {
            text.push_str(&format!("2023-01-01T0{h}:00:00Z,{h}\n"));
        }
        text.push_str("2023-13-45T00:00:00Z,1\n");
        match ingest(&text) {
            Err(SeriesError::Parse { row, .. }) => assert_eq!(row, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn local_and_missing_values() {
        let (s, r) =
            ingest("timestamp,value\n2023-07-01 12:00:00,\n2023-07-01T12:30:00,NaN\n2023-07-01T13:00:00+02:00,5\n")
                .unwrap();
        assert_eq!(r.missing, 2);
        // 12:00 CEST is 10:00 UTC
        assert_eq!(s.observations()[0].timestamp.to_rfc3339(), "2023-07-01T10:00:00+00:00");
        assert_eq!(s.observations()[2].value, Some(5.0));
    }

    #[test]
    fn missing_column() {
        assert!(matches!(ingest("time,value\n"), Err(SeriesError::Parse { row: 0, .. })));
    }

    #[test]
    fn drop_invalid_examples() {
        let t0 = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
        let obs = [50.0, 101.0, 80.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| Observation {
                timestamp: t0 + chrono::Duration::seconds(30 * i as i64),
                value: Some(v),
            })
            .collect();
        let s = RawSeries::new("rh", Unit::PercentRh, obs).unwrap();
        let bounds = ValidityBounds::for_unit(Unit::PercentRh).unwrap();
        let (kept, removed) = drop_invalid(&s, &bounds);
        assert_eq!(removed, 1);
        let v: Vec<_> = kept.observations().iter().map(|o| o.value.unwrap()).collect();
        assert_eq!(v, vec![50.0, 80.0]);
        let (same, zero) = drop_invalid(&kept, &bounds);
        assert_eq!(zero, 0);
        assert_eq!(same, kept);
    }
}
