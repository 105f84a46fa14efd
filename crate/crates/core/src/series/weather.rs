//! Meteorological connector: hourly observations from a file fixture or an HTTP endpoint.
//!
//! Wire shape is a JSON array of `{"ts": ISO 8601, "var": name, "val": number}`
//! records (CSV fixtures use the same three columns). Every one of the seven
//! variables must be present.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::ingest::parse_timestamp;
use super::{Observation, RawSeries, Result, SeriesError};
use crate::twin::Unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WeatherVariable {
    #[serde(rename = "airTemperature")]
    AirTemperature,
    #[serde(rename = "relativeHumidity")]
    RelativeHumidity,
    #[serde(rename = "dewPointTemperature")]
    DewPoint,
    #[serde(rename = "precipitation")]
    Precipitation,
    #[serde(rename = "windSpeed")]
    WindSpeed,
    #[serde(rename = "windDirection")]
    WindDirection,
    #[serde(rename = "globalIrradiance")]
    GlobalIrradiance,
}

impl WeatherVariable {
    pub const ALL: [WeatherVariable; 7] = [
        WeatherVariable::AirTemperature,
        WeatherVariable::RelativeHumidity,
        WeatherVariable::DewPoint,
        WeatherVariable::Precipitation,
        WeatherVariable::WindSpeed,
        WeatherVariable::WindDirection,
        WeatherVariable::GlobalIrradiance,
    ];

    pub fn wire_name(self) -> &'static str {
        match self {
            WeatherVariable::AirTemperature => "airTemperature",
            WeatherVariable::RelativeHumidity => "relativeHumidity",
            WeatherVariable::DewPoint => "dewPointTemperature",
            WeatherVariable::Precipitation => "precipitation",
            WeatherVariable::WindSpeed => "windSpeed",
            WeatherVariable::WindDirection => "windDirection",
            WeatherVariable::GlobalIrradiance => "globalIrradiance",
        }
    }

    pub fn from_wire(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.wire_name() == name)
    }

    /// Identifier of the canonical series built from this variable.
    pub fn series_id(self) -> &'static str {
        match self {
            WeatherVariable::AirTemperature => "outdoor_temperature",
            WeatherVariable::RelativeHumidity => "outdoor_relative_humidity",
            WeatherVariable::DewPoint => "outdoor_dew_point",
            WeatherVariable::Precipitation => "outdoor_precipitation",
            WeatherVariable::WindSpeed => "outdoor_wind_speed",
            WeatherVariable::WindDirection => "outdoor_wind_direction",
            WeatherVariable::GlobalIrradiance => "outdoor_global_irradiance",
        }
    }

    pub fn unit(self) -> Unit {
        match self {
            WeatherVariable::AirTemperature | WeatherVariable::DewPoint => Unit::Celsius,
            WeatherVariable::RelativeHumidity => Unit::PercentRh,
            WeatherVariable::Precipitation => Unit::Millimeters,
            WeatherVariable::WindSpeed => Unit::MetersPerSecond,
            WeatherVariable::WindDirection => Unit::Degrees,
            WeatherVariable::GlobalIrradiance => Unit::WattsPerSquareMeter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectorConfig {
    /// `file:<path>` (JSON or `.csv`) or an `http://` / `https://` URL.
    pub source: String,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_retries() -> u32 {
    2
}

fn default_timeout_ms() -> u64 {
    5_000
}

fn default_backoff_ms() -> u64 {
    200
}

impl ConnectorConfig {
    pub fn new(source: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            retries: default_retries(),
            timeout_ms: default_timeout_ms(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Record {
    ts: String,
    var: String,
    val: Option<f64>,
}

/// One raw series per weather variable, in [`WeatherVariable::ALL`] order.
pub fn fetch_weather(config: &ConnectorConfig, tz: Tz) -> Result<Vec<RawSeries>> {
    if let Some(path) = config.source.strip_prefix("file:") {
        let text = std::fs::read_to_string(path)?;
        let is_csv = Path::new(path)
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        return if is_csv {
            parse_payload_csv(&text, tz)
        } else {
            parse_payload_json(&text, tz)
        };
    }
    if config.source.starts_with("http://") || config.source.starts_with("https://") {
        let body = fetch_http(config)?;
        return parse_payload_json(&body, tz);
    }
    Err(SeriesError::Invalid(format!(
        "connector source {:?} must start with file: or http(s)://",
        config.source
    )))
}

fn fetch_http(config: &ConnectorConfig) -> Result<String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
        .build()
        .into();
    let attempts = config.retries + 1;
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(config.backoff_ms * attempt as u64));
        }
        match agent.get(&config.source).call() {
            Ok(mut resp) => match resp.body_mut().read_to_string() {
                Ok(body) => return Ok(body),
                Err(e) => last = e.to_string(),
            },
            Err(e) => last = e.to_string(),
        }
        log::warn!("weather fetch attempt {} of {attempts} failed: {last}", attempt + 1);
    }
    Err(SeriesError::ConnectorUnreachable {
        attempts,
        message: last,
    })
}

fn assemble(records: Vec<Record>, tz: Tz) -> Result<Vec<RawSeries>> {
    let mut per_var: BTreeMap<WeatherVariable, BTreeMap<DateTime<Utc>, Option<f64>>> = BTreeMap::new();
    for (i, r) in records.into_iter().enumerate() {
        let Some(var) = WeatherVariable::from_wire(&r.var) else {
            log::debug!("ignoring unknown weather variable {:?}", r.var);
            continue;
        };
        let ts = parse_timestamp(&r.ts, tz)
            .map_err(|m| SeriesError::PayloadSchemaError(format!("record {}: {m}", i + 1)))?;
        per_var
            .entry(var)
            .or_default()
            .insert(ts, r.val.filter(|v| v.is_finite()));
    }
    WeatherVariable::ALL
        .iter()
        .map(|&var| {
            let points = per_var
                .remove(&var)
                .ok_or_else(|| SeriesError::PayloadSchemaError(format!("no records for {:?}", var.wire_name())))?;
            let obs = points
                .into_iter()
                .map(|(timestamp, value)| Observation { timestamp, value })
                .collect();
            RawSeries::new(var.series_id(), var.unit(), obs)
        })
        .collect()
}

pub fn parse_payload_json(text: &str, tz: Tz) -> Result<Vec<RawSeries>> {
    let records: Vec<Record> =
        serde_json::from_str(text).map_err(|e| SeriesError::PayloadSchemaError(e.to_string()))?;
    assemble(records, tz)
}

pub fn parse_payload_csv(text: &str, tz: Tz) -> Result<Vec<RawSeries>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let records = reader
        .deserialize::<Record>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| SeriesError::PayloadSchemaError(e.to_string()))?;
    assemble(records, tz)
}
