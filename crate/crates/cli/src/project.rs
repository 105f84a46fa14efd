//! On-disk layout of a project: canonical series, datasets and the model registry.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use twinforecast_core::features::{DatasetManifest, FeatureFrame, FrameScalers, HolidayCalendar, WindowSample};
use twinforecast_core::forecast::Architecture;
use twinforecast_core::series::weather::WeatherVariable;
use twinforecast_core::series::{CleaningReport, RegularSeries};
use twinforecast_core::twin::{EntityClass, TwinGraph, Unit};

use crate::config::ProjectConfig;
use crate::error::CliError;

pub const LOOKBACK: usize = 168;
pub const HORIZON: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Temperature,
    RelativeHumidity,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Temperature => "temperature",
            Target::RelativeHumidity => "relative_humidity",
        }
    }

    pub fn sensor_class(self) -> EntityClass {
        match self {
            Target::Temperature => EntityClass::TemperatureSensor,
            Target::RelativeHumidity => EntityClass::HumiditySensor,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "temperature" | "temp" => Ok(Target::Temperature),
            "relative_humidity" | "humidity" | "rh" => Ok(Target::RelativeHumidity),
            _ => Err(format!(
                "unknown target {s:?}; expected temperature or relative_humidity"
            )),
        }
    }
}

pub fn parse_unit(s: &str) -> Result<Unit, String> {
    let canonical = match s.to_ascii_lowercase().as_str() {
        "c" | "celsius" | "degc" => "°C",
        "rh" | "%" | "percent" => "%RH",
        "ppm" => "ppm",
        _ => s,
    };
    Unit::from_str(canonical).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub unit: Unit,
    /// Relative to the data directory.
    pub file: String,
    pub start: DateTime<Utc>,
    pub len: usize,
    pub source: String,
    pub cleaning: Option<CleaningReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub series: BTreeMap<String, CatalogEntry>,
}

/// What `preprocess` records for one (room, target) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetArtifact {
    pub room: String,
    pub target: Target,
    pub target_series: String,
    pub weather_series: Vec<String>,
    pub manifest: DatasetManifest,
    pub manifest_hash: String,
    pub scalers: FrameScalers,
    pub start: DateTime<Utc>,
    pub len: usize,
    pub boundaries: (usize, usize),
    pub degenerate_columns: Vec<String>,
}

pub struct Project {
    pub config: ProjectConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

pub fn model_name(room: &str, target: Target, arch: Architecture) -> String {
    format!("{room}_{target}_{}", arch.tag().to_ascii_lowercase())
}

impl Project {
    pub fn new(config: ProjectConfig) -> Self {
        Project { config }
    }

    pub fn open(config_path: &Path) -> Result<Self, CliError> {
        Ok(Project::new(ProjectConfig::load(config_path)?))
    }

    fn catalog_path(&self) -> PathBuf {
        self.config.data_dir.join("catalog.json")
    }

    pub fn catalog(&self) -> Result<Catalog, CliError> {
        let p = self.catalog_path();
        if p.exists() {
            read_json(&p)
        } else {
            Ok(Catalog::default())
        }
    }

    /// Writes a canonical series and records it in the catalog.
    pub fn store_series(
        &self,
        series: &RegularSeries,
        source: &str,
        cleaning: Option<CleaningReport>,
    ) -> Result<(), CliError> {
        let file = format!("series/{}.csv", series.series_id());
        let path = self.config.data_dir.join(&file);
        fs::create_dir_all(path.parent().expect("series dir"))?;
        series.write_csv(fs::File::create(&path)?)?;
        let mut catalog = self.catalog()?;
        catalog.series.insert(
            series.series_id().to_string(),
            CatalogEntry {
                unit: series.unit(),
                file,
                start: series.start(),
                len: series.len(),
                source: source.to_string(),
                cleaning,
            },
        );
        write_json(&self.catalog_path(), &catalog)
    }

    pub fn load_series(&self, id: &str) -> Result<RegularSeries, CliError> {
        let catalog = self.catalog()?;
        let entry = catalog
            .series
            .get(id)
            .ok_or_else(|| CliError::User(format!("series {id:?} is not in the catalog; ingest it first")))?;
        let path = self.config.data_dir.join(&entry.file);
        let file = fs::File::open(&path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        RegularSeries::read_csv(file, id, entry.unit, self.config.timezone)
            .map_err(|e| CliError::from(e).context(path.display()))
    }

    pub fn holidays(&self) -> Result<HolidayCalendar, CliError> {
        match &self.config.holidays {
            Some(p) => HolidayCalendar::from_file(p).map_err(|e| CliError::from(e).context(p.display())),
            None => Ok(HolidayCalendar::swedish()),
        }
    }

    pub fn load_twin(&self) -> Result<TwinGraph, CliError> {
        let p = &self.config.twin;
        let text = fs::read_to_string(p)
            .map_err(|e| CliError::User(format!("twin {}: {e}; run `twinforecast twin init` first", p.display())))?;
        TwinGraph::from_json(&text).map_err(|e| CliError::from(e).context(p.display()))
    }

    pub fn save_twin(&self, twin: &TwinGraph) -> Result<(), CliError> {
        fs::write(&self.config.twin, twin.to_json())?;
        Ok(())
    }

    /// Series bound to the room's sensor for `target`.
    pub fn target_series_id(&self, twin: &TwinGraph, room: &str, target: Target) -> Result<String, CliError> {
        let points = twin
            .query_points(room, Some(target.sensor_class()))
            .map_err(|e| CliError::User(format!("room {room:?}: {e}")))?;
        let mut series: Vec<String> = points
            .iter()
            .flat_map(|p| twin.bindings_of(&p.id))
            .map(|b| b.series_id.clone())
            .collect();
        series.sort();
        match series.len() {
            0 => Err(CliError::User(format!(
                "room {room:?} has no {target} series bound in the twin"
            ))),
            1 => Ok(series.remove(0)),
            _ => Err(CliError::User(format!(
                "room {room:?} has several {target} series bound ({}); bind exactly one",
                series.join(", ")
            ))),
        }
    }

    pub fn dataset_path(&self, room: &str, target: Target) -> PathBuf {
        self.config
            .data_dir
            .join("datasets")
            .join(format!("{room}_{target}.json"))
    }

    pub fn save_dataset(&self, d: &DatasetArtifact) -> Result<PathBuf, CliError> {
        let p = self.dataset_path(&d.room, d.target);
        write_json(&p, d)?;
        Ok(p)
    }

    pub fn load_dataset(&self, room: &str, target: Target) -> Result<DatasetArtifact, CliError> {
        let p = self.dataset_path(room, target);
        if !p.exists() {
            return Err(CliError::User(format!(
                "no dataset for {room}/{target}; run `twinforecast preprocess --room {room} --target {target}` first"
            )));
        }
        read_json(&p)
    }

    /// Aligned feature frame for a room and target; `scalers` reuses fitted scaling.
    pub fn build_frame(
        &self,
        room: &str,
        target: Target,
        scalers: Option<&FrameScalers>,
    ) -> Result<(Arc<FeatureFrame>, String), CliError> {
        let twin = self.load_twin()?;
        let series_id = self.target_series_id(&twin, room, target)?;
        let target_series = self.load_series(&series_id)?;
        let weather = WeatherVariable::ALL
            .iter()
            .map(|v| self.load_series(v.series_id()))
            .collect::<Result<Vec<_>, _>>()?;
        let holidays = self.holidays()?;
        let frame = match scalers {
            Some(s) => FeatureFrame::build_with_scalers(&target_series, &weather, &holidays, &self.config.split, s)?,
            None => FeatureFrame::build(&target_series, &weather, &holidays, &self.config.split)?,
        };
        Ok((Arc::new(frame), series_id))
    }

    /// The frame a trained dataset was built from, checked against its manifest.
    pub fn dataset_frame(&self, d: &DatasetArtifact) -> Result<Arc<FeatureFrame>, CliError> {
        let (frame, _) = self.build_frame(&d.room, d.target, Some(&d.scalers))?;
        let manifest = WindowSample::at(&frame, 0, LOOKBACK, HORIZON)?.manifest();
        if manifest.hash() != d.manifest_hash || frame.len() != d.len || frame.start() != d.start {
            return Err(CliError::User(format!(
                "series for {}/{} changed since preprocessing; run preprocess again",
                d.room, d.target
            )));
        }
        Ok(frame)
    }

    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.config.registry.join(format!("{name}.tfwt"))
    }

    pub fn train_report_path(&self, name: &str) -> PathBuf {
        self.config.registry.join(format!("{name}.train.json"))
    }

    pub fn eval_paths(&self, name: &str) -> (PathBuf, PathBuf) {
        let dir = self.config.registry.join("reports");
        (dir.join(format!("{name}.json")), dir.join(format!("{name}.csv")))
    }

    pub fn latency_path(&self, name: &str) -> PathBuf {
        self.config
            .registry
            .join("reports")
            .join(format!("{name}.latency.json"))
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), CliError> {
        write_json(path, value)
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<T, CliError> {
        read_json(path)
    }
}
