//! Forecasting models behind one contract: the seasonal naive baseline and
//! four neural architectures trained with early stopping.

mod batch;
mod checkpoint;
mod config;
mod nets;
mod train;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use twinforecast_autodiff::{Adam, AdamConfig, AutodiffError, Graph, Mode, ParamStore, Real, Tensor};

use crate::features::{DatasetManifest, FeatureError, FrameScalers, WindowSample};

pub use batch::Batch;
pub use checkpoint::{load, load_expecting, save, CheckpointSidecar, SIDECAR_VERSION};
pub use config::{
    ArchConfig, ArchParseError, Architecture, LstmConfig, NhitsConfig, TcnConfig, TideConfig, TrainerConfig,
};
pub use train::{train, TrainReport};

use nets::Net;

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("history has {len} values; the seasonal naive forecast needs at least 24")]
    HistoryTooShort { len: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
    #[error("model is not trained")]
    NotTrained,
    #[error("feature manifest mismatch: model expects {expected}, got {found}")]
    ManifestMismatch { expected: String, found: String },
    #[error("checkpoint checksum mismatch: {0}")]
    ChecksumMismatch(String),
    #[error("checkpoint version {found} is not supported")]
    VersionMismatch { found: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ForecastError> = std::result::Result<T, E>;

/// What is forecast and from which inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTask {
    pub manifest: DatasetManifest,
    pub lookback: usize,
    pub horizon: usize,
    pub covariates: usize,
}

impl ForecastTask {
    pub fn new(manifest: DatasetManifest) -> Self {
        ForecastTask {
            lookback: manifest.lookback,
            horizon: manifest.horizon,
            covariates: manifest.covariates.len(),
            manifest,
        }
    }
}

/// `forecast[t] = history[end - 24 + t]`, repeating daily past 24 steps.
pub fn sn24_forecast(history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let n = history.len();
    if n < 24 {
        return Err(ForecastError::HistoryTooShort { len: n });
    }
    Ok((0..horizon).map(|t| history[n - 24 + t % 24]).collect())
}

/// Per-stack forecasts of an N-HiTS model, in scaled target units.
#[derive(Debug, Clone, PartialEq)]
pub struct NhitsDecomposition {
    pub stacks: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Clone)]
pub struct Forecaster {
    config: ArchConfig,
    task: ForecastTask,
    params: ParamStore<f32>,
    net: Option<Arc<Net>>,
    scalers: Option<FrameScalers>,
    trained: bool,
}

impl std::fmt::Debug for Forecaster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Forecaster")
            .field("config", &self.config)
            .field("task", &self.task)
            .field("parameters", &self.params.scalar_count())
            .field("trained", &self.trained)
            .finish()
    }
}

fn build_net<T: Real>(config: &ArchConfig, task: &ForecastTask, store: &mut ParamStore<T>, seed: u64) -> Option<Net> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match config {
        ArchConfig::Sn24 => None,
        ArchConfig::Lstm(c) => Some(Net::Lstm(nets::Lstm::new(c, task, store, &mut rng))),
        ArchConfig::Tcn(c) => Some(Net::Tcn(nets::Tcn::new(c, task, store, &mut rng))),
        ArchConfig::Nhits(c) => Some(Net::Nhits(nets::Nhits::new(c, task, store, &mut rng))),
        ArchConfig::Tide(c) => Some(Net::Tide(nets::Tide::new(c, task, store, &mut rng))),
    }
}

/// Untrained model with seeded initialization. SN24 is returned trained.
pub fn build_model(config: ArchConfig, task: ForecastTask, seed: u64) -> Result<Forecaster> {
    config.validate(&task)?;
    if task.covariates != task.manifest.covariates.len()
        || task.lookback != task.manifest.lookback
        || task.horizon != task.manifest.horizon
    {
        return Err(ForecastError::InvalidHyperparameter(
            "task dimensions disagree with its manifest".into(),
        ));
    }
    let mut params = ParamStore::new();
    let net = build_net(&config, &task, &mut params, seed).map(Arc::new);
    let trained = net.is_none();
    Ok(Forecaster {
        config,
        task,
        params,
        net,
        scalers: None,
        trained,
    })
}

impl Forecaster {
    pub fn architecture(&self) -> Architecture {
        self.config.architecture()
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn task(&self) -> &ForecastTask {
        &self.task
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn parameters(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Scalers the model was trained under; `None` for SN24.
    pub fn scalers(&self) -> Option<&FrameScalers> {
        self.scalers.as_ref()
    }

    fn check_sample(&self, sample: &WindowSample<'_>) -> Result<()> {
        let found = sample.manifest();
        if found != self.task.manifest {
            return Err(ForecastError::ManifestMismatch {
                expected: self.task.manifest.hash(),
                found: found.hash(),
            });
        }
        if let Some(s) = &self.scalers {
            if s != sample.frame().scalers() {
                return Err(ForecastError::ManifestMismatch {
                    expected: "the training scalers".into(),
                    found: "a frame scaled differently".into(),
                });
            }
        }
        Ok(())
    }

    fn net(&self) -> &Net {
        self.net.as_deref().expect("neural architecture")
    }

    pub(crate) fn forward_scaled(&self, batch: &Batch<f32>) -> Result<Vec<f32>> {
        let mut g = Graph::new(Mode::Eval);
        let p = g.bind_params(&self.params)?;
        let out = self.net().forward(&mut g, &p, batch)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Forecast in physical units for the `horizon` steps after the window's lookback.
    pub fn predict(&self, sample: &WindowSample<'_>) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(ForecastError::NotTrained);
        }
        self.check_sample(sample)?;
        if self.net.is_none() {
            return sn24_forecast(sample.past_target_raw(), self.task.horizon);
        }
        let scaler = self.scalers.as_ref().ok_or(ForecastError::NotTrained)?.target;
        let out = self.forward_scaled(&Batch::from_samples(std::slice::from_ref(sample)))?;
        Ok(out.iter().map(|&v| scaler.inverse(v as f64)).collect())
    }

    /// Stack contributions for one window; only for N-HiTS models.
    pub fn nhits_decomposition(&self, sample: &WindowSample<'_>) -> Result<NhitsDecomposition> {
        let Some(Net::Nhits(m)) = self.net.as_deref() else {
            return Err(ForecastError::InvalidHyperparameter(format!(
                "{} has no stack decomposition",
                self.architecture()
            )));
        };
        self.check_sample(sample)?;
        let batch = Batch::<f32>::from_samples(std::slice::from_ref(sample));
        let mut g = Graph::new(Mode::Eval);
        let p = g.bind_params(&self.params)?;
        let (out, parts) = m.forward_parts(&mut g, &p, &batch)?;
        let vals = |v| g.value(v).to_f64_vec();
        Ok(NhitsDecomposition {
            stacks: parts.into_iter().map(vals).collect(),
            output: vals(out),
        })
    }

    /// L2 norm of the loss gradient for every parameter tensor, on the given windows.
    pub fn gradient_norms(&self, samples: &[WindowSample<'_>]) -> Result<Vec<(String, f64)>> {
        if self.net.is_none() || samples.is_empty() {
            return Ok(Vec::new());
        }
        let batch = Batch::<f32>::from_samples(samples);
        let mut g = Graph::with_seed(Mode::Train, 0);
        let p = g.bind_params(&self.params)?;
        let out = self.net().forward(&mut g, &p, &batch)?;
        let target = g.input(Tensor::new(vec![batch.size, batch.horizon], batch.target.clone())?)?;
        let loss = g.mse(out, target)?;
        let grads = g.backward(loss)?;
        Ok(self
            .params
            .iter()
            .map(|(id, name, _)| {
                let norm = grads
                    .get(id)
                    .map(|t| t.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt())
                    .unwrap_or(0.0);
                (name.to_string(), norm)
            })
            .collect())
    }

    /// Runs `steps` Adam updates on one fixed batch and returns the loss before each step.
    pub fn fit_batch(&mut self, samples: &[WindowSample<'_>], steps: usize, adam: AdamConfig) -> Result<Vec<f64>> {
        if self.net.is_none() {
            return Ok(Vec::new());
        }
        if samples.is_empty() {
            return Err(ForecastError::EmptyDataset("batch"));
        }
        for s in samples {
            if s.manifest() != self.task.manifest {
                return Err(ForecastError::ManifestMismatch {
                    expected: self.task.manifest.hash(),
                    found: s.manifest().hash(),
                });
            }
        }
        let batch = Batch::<f32>::from_samples(samples);
        let mut opt = Adam::new(adam, &self.params);
        let mut losses = Vec::with_capacity(steps);
        for step in 0..steps {
            let (loss, grads) =
                train::loss_and_grads(self, &batch, step as u64).map_err(|e| train::non_finite(e, 0, step))?;
            losses.push(loss);
            opt.step(&mut self.params, &grads)?;
        }
        self.scalers = Some(samples[0].frame().scalers().clone());
        self.trained = true;
        Ok(losses)
    }
}
