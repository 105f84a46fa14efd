use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use twinforecast_autodiff::{Adam, AdamConfig, AutodiffError, Gradients, Graph, Mode, Tensor};

use super::{Architecture, Batch, ForecastError, Forecaster, Result, TrainerConfig};
use crate::features::WindowedDataset;

/// Outcome of one training run, written next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub arch: Architecture,
    pub target: String,
    pub parameters: usize,
    pub train_windows: usize,
    pub valid_windows: usize,
    pub epochs_run: usize,
    /// 1-based; 0 when nothing was fitted.
    pub best_epoch: usize,
    pub best_valid_loss: Option<f64>,
    pub stopped_early: bool,
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub wall_time_s: f64,
    pub config: TrainerConfig,
}

pub(crate) fn non_finite(e: AutodiffError, epoch: usize, batch: usize) -> ForecastError {
    match e {
        AutodiffError::NonFiniteValue { op } => ForecastError::NonFiniteLoss {
            epoch,
            batch,
            detail: format!("non-finite value produced by {op}"),
        },
        other => ForecastError::Autodiff(other),
    }
}

pub(crate) fn loss_and_grads(
    model: &Forecaster,
    batch: &Batch<f32>,
    seed: u64,
) -> std::result::Result<(f64, Gradients<f32>), AutodiffError> {
    let mut g = Graph::with_seed(Mode::Train, seed);
    let p = g.bind_params(&model.params)?;
    let out = model.net().forward(&mut g, &p, batch)?;
    let target = g.input(Tensor::new(vec![batch.size, batch.horizon], batch.target.clone())?)?;
    let loss = g.mse(out, target)?;
    let value = g.value(loss).data()[0] as f64;
    Ok((value, g.backward(loss)?))
}

/// Mean squared error in scaled units over every window and horizon step.
fn evaluate_loss(model: &Forecaster, data: &WindowedDataset) -> std::result::Result<f64, AutodiffError> {
    let samples: Vec<_> = data.samples().collect();
    let mut sse = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(256) {
        let batch = Batch::<f32>::from_samples(chunk);
        let out = model.forward_scaled(&batch).map_err(|e| match e {
            ForecastError::Autodiff(a) => a,
            other => AutodiffError::ShapeMismatch {
                op: "evaluate",
                detail: other.to_string(),
            },
        })?;
        for (p, t) in out.iter().zip(&batch.target) {
            sse += (*p as f64 - *t as f64).powi(2);
        }
        count += out.len();
    }
    Ok(sse / count as f64)
}

fn step_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed ^ ((epoch as u64) << 32 | batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits `model` with Adam on shuffled mini-batches and early stopping on
/// validation MSE. Returns the parameters of the best validation epoch.
pub fn train(
    mut model: Forecaster,
    train_set: &WindowedDataset,
    valid_set: &WindowedDataset,
    config: &TrainerConfig,
) -> Result<(Forecaster, TrainReport)> {
    config.validate()?;
    let started = Instant::now();
    if train_set.is_empty() {
        return Err(ForecastError::EmptyDataset("training"));
    }
    if valid_set.is_empty() {
        return Err(ForecastError::EmptyDataset("validation"));
    }
    for set in [train_set, valid_set] {
        let m = set.manifest();
        if m != model.task.manifest {
            return Err(ForecastError::ManifestMismatch {
                expected: model.task.manifest.hash(),
                found: m.hash(),
            });
        }
    }
    if train_set.frame().scalers() != valid_set.frame().scalers() {
        return Err(ForecastError::ManifestMismatch {
            expected: "training and validation windows from one scaling".into(),
            found: "differently scaled frames".into(),
        });
    }
    let mut report = TrainReport {
        arch: model.architecture(),
        target: model.task.manifest.target.clone(),
        parameters: model.parameter_count(),
        train_windows: train_set.len(),
        valid_windows: valid_set.len(),
        epochs_run: 0,
        best_epoch: 0,
        best_valid_loss: None,
        stopped_early: false,
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
        wall_time_s: 0.0,
        config: config.clone(),
    };
    if model.net.is_none() {
        report.wall_time_s = started.elapsed().as_secs_f64();
        return Ok((model, report));
    }

    let mut opt = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = model.params.clone();
    let mut best_loss = f64::INFINITY;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<_> = idx.iter().map(|&i| train_set.sample(i)).collect();
            let batch = Batch::from_samples(&samples);
            let (loss, grads) = loss_and_grads(&model, &batch, step_seed(config.seed, epoch, b))
                .map_err(|e| non_finite(e, epoch, b))?;
            if !loss.is_finite() {
                return Err(ForecastError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("loss {loss}"),
                });
            }
            opt.step(&mut model.params, &grads)?;
            sum += loss * idx.len() as f64;
        }
        let train_loss = sum / train_set.len() as f64;
        let valid_loss = evaluate_loss(&model, valid_set).map_err(|e| non_finite(e, epoch, 0))?;
        if !valid_loss.is_finite() {
            return Err(ForecastError::NonFiniteLoss {
                epoch,
                batch: 0,
                detail: format!("validation loss {valid_loss}"),
            });
        }
        report.train_loss.push(train_loss);
        report.valid_loss.push(valid_loss);
        report.epochs_run = epoch;
        log::debug!(
            "{} epoch {epoch}: train {train_loss:.6} valid {valid_loss:.6}",
            report.arch
        );
        if valid_loss < best_loss {
            best_loss = valid_loss;
            report.best_epoch = epoch;
            best.copy_from(&model.params)?;
        }
        if epoch >= report.best_epoch + config.patience {
            report.stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    model.params = best;
    model.scalers = Some(train_set.frame().scalers().clone());
    model.trained = true;
    report.best_valid_loss = Some(best_loss);
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok((model, report))
}
