use twinforecast_core::eval::EvalError;
use twinforecast_core::features::FeatureError;
use twinforecast_core::forecast::ForecastError;
use twinforecast_core::series::SeriesError;
use twinforecast_core::synth::SynthError;
use twinforecast_core::twin::TwinError;

/// User errors exit with 1, internal failures with 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    /// Prefixes the message, keeping the classification.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::User(m) => CliError::User(format!("{what}: {m}")),
            CliError::Internal(m) => CliError::Internal(format!("{what}: {m}")),
        }
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<TwinError> for CliError {
    fn from(e: TwinError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> Self {
        match e {
            ForecastError::NonFiniteLoss { .. } | ForecastError::Autodiff(_) => CliError::Internal(e.to_string()),
            other => CliError::User(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Forecast(f) => f.into(),
            other => CliError::User(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::User(format!("invalid JSON: {e}"))
    }
}
