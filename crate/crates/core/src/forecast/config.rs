use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ForecastError, ForecastTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "SN24")]
    Sn24,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "TCN")]
    Tcn,
    #[serde(rename = "NHITS")]
    Nhits,
    #[serde(rename = "TIDE")]
    Tide,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Sn24,
        Architecture::Lstm,
        Architecture::Tcn,
        Architecture::Nhits,
        Architecture::Tide,
    ];
    pub const NEURAL: [Architecture; 4] = [
        Architecture::Lstm,
        Architecture::Tcn,
        Architecture::Nhits,
        Architecture::Tide,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Sn24 => "SN24",
            Architecture::Lstm => "LSTM",
            Architecture::Tcn => "TCN",
            Architecture::Nhits => "NHITS",
            Architecture::Tide => "TIDE",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArchParseError {
    /// The temporal fusion transformer is deliberately not provided.
    Excluded,
    Unknown(String),
}

impl fmt::Display for ArchParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchParseError::Excluded => f.write_str(
                "TFT is not available: the temporal fusion transformer is excluded from this toolkit \
                 (see the README section on model selection); choose one of sn24, lstm, tcn, nhits, tide",
            ),
            ArchParseError::Unknown(s) => {
                write!(
                    f,
                    "unknown architecture '{s}'; expected one of sn24, lstm, tcn, nhits, tide"
                )
            }
        }
    }
}

impl std::error::Error for ArchParseError {}

impl FromStr for Architecture {
    type Err = ArchParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "sn24" => Ok(Architecture::Sn24),
            "lstm" => Ok(Architecture::Lstm),
            "tcn" => Ok(Architecture::Tcn),
            "nhits" => Ok(Architecture::Nhits),
            "tide" => Ok(Architecture::Tide),
            "tft" => Err(ArchParseError::Excluded),
            _ => Err(ArchParseError::Unknown(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig { hidden: 64, layers: 2 }
    }
}

impl LstmConfig {
    /// Closed-form parameter count: one bias vector per recurrent layer.
    pub fn parameter_count(&self, task: &ForecastTask) -> usize {
        let h = self.hidden;
        let mut total = 0;
        let mut input = 1 + task.covariates;
        for _ in 0..self.layers {
            total += 4 * h * (input + h) + 4 * h;
            input = h;
        }
        total + (h + task.horizon * task.covariates + 1) * task.horizon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcnConfig {
    pub channels: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
}

impl Default for TcnConfig {
    fn default() -> Self {
        TcnConfig {
            channels: 32,
            kernel_size: 3,
            dilations: vec![1, 2, 4, 8, 16, 32, 64],
        }
    }
}

impl TcnConfig {
    /// Two causal convolutions per block.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * self.kernel_size.saturating_sub(1) * self.dilations.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NhitsConfig {
    pub pool_kernels: Vec<usize>,
    pub hidden: usize,
    pub mlp_layers: usize,
    pub forecast_coefficients: Vec<usize>,
    pub backcast_coefficients: Vec<usize>,
}

impl NhitsConfig {
    pub fn for_task(task: &ForecastTask) -> Self {
        let (l, h) = (task.lookback, task.horizon);
        NhitsConfig {
            pool_kernels: vec![8, 4, 1],
            hidden: 512,
            mlp_layers: 2,
            forecast_coefficients: vec![(h / 12).max(1), (h / 2).max(1), h],
            backcast_coefficients: vec![(l / 12).max(1), (l / 2).max(1), l],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TideConfig {
    pub hidden: usize,
    pub projection_dim: usize,
    pub projection_hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub decoder_dim: usize,
    pub temporal_hidden: usize,
    pub dropout: f64,
}

impl Default for TideConfig {
    fn default() -> Self {
        TideConfig {
            hidden: 128,
            projection_dim: 8,
            projection_hidden: 32,
            encoder_layers: 2,
            decoder_layers: 2,
            decoder_dim: 16,
            temporal_hidden: 32,
            dropout: 0.1,
        }
    }
}

/// Architecture tag together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch")]
pub enum ArchConfig {
    #[serde(rename = "SN24")]
    Sn24,
    #[serde(rename = "LSTM")]
    Lstm(LstmConfig),
    #[serde(rename = "TCN")]
    Tcn(TcnConfig),
    #[serde(rename = "NHITS")]
    Nhits(NhitsConfig),
    #[serde(rename = "TIDE")]
    Tide(TideConfig),
}

impl ArchConfig {
    pub fn default_for(arch: Architecture, task: &ForecastTask) -> Self {
        match arch {
            Architecture::Sn24 => ArchConfig::Sn24,
            Architecture::Lstm => ArchConfig::Lstm(LstmConfig::default()),
            Architecture::Tcn => ArchConfig::Tcn(TcnConfig::default()),
            Architecture::Nhits => ArchConfig::Nhits(NhitsConfig::for_task(task)),
            Architecture::Tide => ArchConfig::Tide(TideConfig::default()),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            ArchConfig::Sn24 => Architecture::Sn24,
            ArchConfig::Lstm(_) => Architecture::Lstm,
            ArchConfig::Tcn(_) => Architecture::Tcn,
            ArchConfig::Nhits(_) => Architecture::Nhits,
            ArchConfig::Tide(_) => Architecture::Tide,
        }
    }

    /// Replaces individual hyperparameters, e.g. `{"hidden": 32}`.
    pub fn with_overrides(&self, overrides: &Map<String, Value>) -> Result<Self, ForecastError> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("tagged config is an object");
        for (k, val) in overrides {
            if k == "arch" {
                return Err(ForecastError::InvalidHyperparameter(
                    "the architecture tag cannot be overridden".into(),
                ));
            }
            if !obj.contains_key(k) {
                return Err(ForecastError::InvalidHyperparameter(format!(
                    "{} has no hyperparameter '{k}'",
                    self.architecture()
                )));
            }
            obj.insert(k.clone(), val.clone());
        }
        serde_json::from_value(v).map_err(|e| ForecastError::InvalidHyperparameter(e.to_string()))
    }

    pub fn validate(&self, task: &ForecastTask) -> Result<(), ForecastError> {
        let bad = |m: String| Err(ForecastError::InvalidHyperparameter(m));
        if task.lookback == 0 || task.horizon == 0 {
            return bad("lookback and horizon must be positive".into());
        }
        match self {
            ArchConfig::Sn24 => {
                if task.lookback < 24 {
                    return bad(format!("SN24 needs a lookback of at least 24, got {}", task.lookback));
                }
            }
            ArchConfig::Lstm(c) => {
                if c.hidden == 0 {
                    return bad("hidden must be positive".into());
                }
                if c.layers == 0 {
                    return bad("layers must be positive".into());
                }
            }
            ArchConfig::Tcn(c) => {
                if c.channels == 0 {
                    return bad("channels must be positive".into());
                }
                if c.kernel_size == 0 {
                    return bad("kernel_size must be positive".into());
                }
                if c.dilations.is_empty() || c.dilations.contains(&0) {
                    return bad("dilations must be a non-empty list of positive integers".into());
                }
            }
            ArchConfig::Nhits(c) => {
                let n = c.pool_kernels.len();
                if n == 0 {
                    return bad("at least one stack is required".into());
                }
                if c.forecast_coefficients.len() != n || c.backcast_coefficients.len() != n {
                    return bad("pool_kernels and coefficient lists must have equal length".into());
                }
                if c.hidden == 0 || c.mlp_layers == 0 {
                    return bad("hidden and mlp_layers must be positive".into());
                }
                for &k in &c.pool_kernels {
                    if k == 0 || k > task.lookback {
                        return bad(format!("pool kernel {k} must lie in 1..={}", task.lookback));
                    }
                }
                if c.forecast_coefficients.iter().any(|&f| f == 0 || f > task.horizon) {
                    return bad(format!("forecast coefficients must lie in 1..={}", task.horizon));
                }
                if c.backcast_coefficients.iter().any(|&b| b == 0 || b > task.lookback) {
                    return bad(format!("backcast coefficients must lie in 1..={}", task.lookback));
                }
            }
            ArchConfig::Tide(c) => {
                for (name, v) in [
                    ("hidden", c.hidden),
                    ("projection_dim", c.projection_dim),
                    ("projection_hidden", c.projection_hidden),
                    ("encoder_layers", c.encoder_layers),
                    ("decoder_layers", c.decoder_layers),
                    ("decoder_dim", c.decoder_dim),
                    ("temporal_hidden", c.temporal_hidden),
                ] {
                    if v == 0 {
                        return bad(format!("{name} must be positive"));
                    }
                }
                if !(0.0..1.0).contains(&c.dropout) {
                    return bad(format!("dropout must lie in [0, 1), got {}", c.dropout));
                }
            }
        }
        Ok(())
    }
}

/// Training loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            max_epochs: 100,
            patience: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 7,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidHyperparameter(m.into()));
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.patience >= self.max_epochs {
            return bad("patience must be smaller than max_epochs");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}
