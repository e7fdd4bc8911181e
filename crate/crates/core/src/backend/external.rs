//! Contract for a real latent-diffusion runtime.
//!
//! A runtime adapter implements [`super::DiffusionBackend`]: descriptor
//! discovery, embedding override hooks before the text encoder, additive
//! injection hooks after it, the epsilon-prediction loss with gradients
//! passed through to the overrides, and a multistep solver for sampling.
//! No runtime ships with this crate; [`connect`] reports that as a backend
//! error so callers can exit with the backend status code.

use serde::{Deserialize, Serialize};

use crate::backend::DiffusionBackend;
use crate::data::{resize_policy, Resolution, Stage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalAdapterConfig {
    pub model_id: String,
    pub device: String,
    pub sampling_steps: u32,
    pub solver: String,
    pub train_resolution: Resolution,
    pub inference_resolution: Resolution,
}

impl Default for ExternalAdapterConfig {
    fn default() -> Self {
        Self {
            model_id: "stabilityai/stable-diffusion-2-1".into(),
            device: "cuda".into(),
            sampling_steps: 50,
            solver: "dpm-solver++".into(),
            train_resolution: resize_policy(Stage::Train, None),
            inference_resolution: resize_policy(Stage::Inference, None),
        }
    }
}

/// Fields an adapter records in a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMetadata {
    pub backend: String,
    pub solver: String,
    pub steps: u32,
}

impl ExternalAdapterConfig {
    pub fn sampling_metadata(&self) -> SamplingMetadata {
        SamplingMetadata {
            backend: self.model_id.clone(),
            solver: self.solver.clone(),
            steps: self.sampling_steps,
        }
    }
}

pub fn connect(config: &ExternalAdapterConfig) -> Result<Box<dyn DiffusionBackend>> {
    Err(Error::Backend(format!(
        "no runtime adapter is linked for model {:?} on {:?}",
        config.model_id, config.device
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_record_fifty_steps() {
        let meta = ExternalAdapterConfig::default().sampling_metadata();
        assert_eq!(meta.steps, 50);
        let json = serde_json::to_value(&meta).unwrap();
        assert_eq!(json["steps"], 50);
    }

    #[test]
    fn connect_reports_backend_error() {
        let err = connect(&ExternalAdapterConfig::default()).err().unwrap();
        assert_eq!(err.exit_code(), 3);
    }
}
