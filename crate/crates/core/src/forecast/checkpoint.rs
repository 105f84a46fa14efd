use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twinforecast_autodiff::checkpoint::{container_digest, decode_container, encode_container, ContainerError};

use super::{build_model, ArchConfig, ForecastError, ForecastTask, Forecaster, Result};
use crate::features::{DatasetManifest, FrameScalers};

pub const SIDECAR_VERSION: u32 = 1;
const FORMAT: &str = "twinforecast-checkpoint";

/// JSON written next to the weight container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub format: String,
    pub sidecar_version: u32,
    pub hyperparameters: ArchConfig,
    pub task: ForecastTask,
    pub manifest_hash: String,
    pub scalers: Option<FrameScalers>,
    pub parameters: usize,
    pub weights_sha256: String,
}

/// `model.tfwt` pairs with `model.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

impl Forecaster {
    /// Hex SHA-256 of the encoded weights; identifies a model build.
    pub fn weights_digest(&self) -> String {
        container_digest(&encode_container(&self.params))
    }
}

/// Writes the weight container at `path` and its JSON sidecar beside it.
pub fn save(model: &Forecaster, path: &Path) -> Result<()> {
    if !model.trained {
        return Err(ForecastError::NotTrained);
    }
    let bytes = encode_container(&model.params);
    let sidecar = CheckpointSidecar {
        format: FORMAT.into(),
        sidecar_version: SIDECAR_VERSION,
        hyperparameters: model.config.clone(),
        task: model.task.clone(),
        manifest_hash: model.task.manifest.hash(),
        scalers: model.scalers.clone(),
        parameters: model.parameter_count(),
        weights_sha256: container_digest(&bytes),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, &bytes)?;
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Forecaster> {
    let text = fs::read_to_string(sidecar_path(path))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ForecastError::Malformed(format!("sidecar: {e}")))?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
        return Err(ForecastError::Malformed(
            "sidecar is not a checkpoint description".into(),
        ));
    }
    match raw.get("sidecar_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SIDECAR_VERSION as u64 => {}
        Some(v) => return Err(ForecastError::VersionMismatch { found: v as u32 }),
        None => return Err(ForecastError::Malformed("sidecar has no version".into())),
    }
    let sidecar: CheckpointSidecar =
        serde_json::from_value(raw).map_err(|e| ForecastError::Malformed(format!("sidecar: {e}")))?;

    let bytes = fs::read(path)?;
    let store = decode_container(&bytes).map_err(|e| match e {
        ContainerError::VersionMismatch { found } => ForecastError::VersionMismatch { found },
        ContainerError::ChecksumMismatch | ContainerError::Truncated => ForecastError::ChecksumMismatch(e.to_string()),
        other => ForecastError::Malformed(other.to_string()),
    })?;
    if container_digest(&bytes) != sidecar.weights_sha256 {
        return Err(ForecastError::ChecksumMismatch(
            "weights do not match the digest recorded in the sidecar".into(),
        ));
    }
    if sidecar.task.manifest.hash() != sidecar.manifest_hash {
        return Err(ForecastError::ManifestMismatch {
            expected: sidecar.manifest_hash,
            found: sidecar.task.manifest.hash(),
        });
    }

    let mut model = build_model(sidecar.hyperparameters, sidecar.task, 0)?;
    let layout_ok = model.params.len() == store.len()
        && model
            .params
            .iter()
            .zip(store.iter())
            .all(|((_, n1, t1), (_, n2, t2))| n1 == n2 && t1.shape() == t2.shape());
    if !layout_ok {
        return Err(ForecastError::Malformed(
            "stored tensors do not match the architecture in the sidecar".into(),
        ));
    }
    model.params = store;
    model.scalers = sidecar.scalers;
    model.trained = true;
    Ok(model)
}

/// Loads a checkpoint and rejects it unless it was trained on `expected`.
pub fn load_expecting(path: &Path, expected: &DatasetManifest) -> Result<Forecaster> {
    let model = load(path)?;
    if &model.task.manifest != expected {
        return Err(ForecastError::ManifestMismatch {
            expected: expected.hash(),
            found: model.task.manifest.hash(),
        });
    }
    Ok(model)
}
