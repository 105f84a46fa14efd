use std::path::{Path, PathBuf};

use chrono_tz::Tz;
use serde::Deserialize;
use twinforecast_core::series::parse_timezone;
use twinforecast_core::series::weather::ConnectorConfig;
use twinforecast_core::series::SplitSpec;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Hours between consecutive training windows.
    #[serde(default = "default_stride")]
    pub train_stride: usize,
}

fn default_seed() -> u64 {
    7
}
fn default_max_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    30
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_stride() -> usize {
    1
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            seed: default_seed(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            train_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data_dir: PathBuf,
    twin: PathBuf,
    timezone: String,
    holidays: Option<PathBuf>,
    registry: PathBuf,
    #[serde(default = "default_port")]
    port: u16,
    #[serde(default = "default_bind")]
    bind: String,
    #[serde(default = "default_hardware")]
    hardware: String,
    weather: Option<ConnectorConfig>,
    #[serde(default)]
    training: TrainingSection,
    split: Option<SplitSection>,
}

fn default_port() -> u16 {
    8080
}
fn default_bind() -> String {
    "127.0.0.1".into()
}
fn default_hardware() -> String {
    "unspecified".into()
}

/// Project settings from a TOML file; relative paths resolve against the file's directory.
#[derive(Debug, Clone)]
pub struct ProjectConfig {
    pub data_dir: PathBuf,
    pub twin: PathBuf,
    pub timezone: Tz,
    pub holidays: Option<PathBuf>,
    pub registry: PathBuf,
    pub port: u16,
    pub bind: String,
    /// Free-text description of the host, copied into latency reports.
    pub hardware: String,
    pub weather: Option<ConnectorConfig>,
    pub training: TrainingSection,
    pub split: SplitSpec,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::User(m) => CliError::User(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::User(format!("invalid config: {e}")))?;
        let timezone = parse_timezone(&raw.timezone)
            .map_err(|_| CliError::User(format!("unknown timezone {:?}", raw.timezone)))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let split = match raw.split {
            Some(s) => SplitSpec::new(s.train, s.valid, s.test).map_err(|e| CliError::User(e.to_string()))?,
            None => SplitSpec::default(),
        };
        let weather = raw.weather.map(|mut w| {
            if let Some(p) = w.source.strip_prefix("file:") {
                w.source = format!("file:{}", resolve(PathBuf::from(p)).display());
            }
            w
        });
        if raw.training.train_stride == 0 {
            return Err(CliError::User("training.train_stride must be at least 1".into()));
        }
        let cfg = ProjectConfig {
            data_dir: resolve(raw.data_dir),
            twin: resolve(raw.twin),
            timezone,
            holidays: raw.holidays.map(resolve),
            registry: resolve(raw.registry),
            port: raw.port,
            bind: raw.bind,
            hardware: raw.hardware,
            weather,
            training: raw.training,
            split,
        };
        if let Some(h) = &cfg.holidays {
            if !h.is_file() {
                return Err(CliError::User(format!("holiday file {} does not exist", h.display())));
            }
        }
        for (name, p) in [("twin", &cfg.twin)] {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() && !parent.is_dir() {
                    return Err(CliError::User(format!(
                        "directory for {name} file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(cfg)
    }
}
