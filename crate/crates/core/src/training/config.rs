//! Training and run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::external::ExternalAdapterConfig;
use crate::backend::mock::MockConfig;
use crate::encoding::EncoderConfig;
use crate::error::{Error, Result};
use crate::geometry::PoseKind;
use crate::training::optim::AdamWConfig;

pub const SINGLE_SCENE_STEPS: u64 = 3000;
pub const ONE_VIEW_NVS_STEPS: u64 = 1500;
pub const THREE_VIEW_NVS_STEPS: u64 = 3000;
pub const PRETRAIN_STEPS: u64 = 100_000;

/// How pretraining draws its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneSampling {
    /// Uniform over all `(scene, view)` pairs.
    UniformPairs,
    /// Uniform over scenes, then over the scene's views.
    UniformScenes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    pub micro_batch: usize,
    pub grad_accumulation: usize,
    pub steps: u64,
    pub seed: u64,
    /// Save a checkpoint every this many steps; 0 disables.
    pub checkpoint_interval: u64,
    pub pose_kind: PoseKind,
    pub encoder: EncoderConfig,
    pub hidden_dim: usize,
    pub blocks: usize,
    pub leaky_slope: f64,
    pub bypass_alpha: f64,
    pub reference_word: String,
    /// Fills `{SCENE}` in single-scene prompts.
    pub class_word: String,
    pub augment: bool,
    /// Draw prompts from the template pool; otherwise use the fixed
    /// `{VIEW}. a photo of a {SCENE}`.
    pub prompt_pool: bool,
    pub scene_sampling: SceneSampling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamWConfig::default(),
            micro_batch: 3,
            grad_accumulation: 3,
            steps: SINGLE_SCENE_STEPS,
            seed: 0,
            checkpoint_interval: 0,
            pose_kind: PoseKind::ProjectionMatrix,
            encoder: EncoderConfig::default(),
            hidden_dim: 64,
            blocks: 2,
            leaky_slope: 0.01,
            bypass_alpha: 0.2,
            reference_word: "object".into(),
            class_word: "object".into(),
            augment: true,
            prompt_pool: true,
            scene_sampling: SceneSampling::UniformPairs,
        }
    }
}

impl TrainConfig {
    pub fn single_scene() -> Self {
        Self::default()
    }

    pub fn pretrain() -> Self {
        Self {
            steps: PRETRAIN_STEPS,
            prompt_pool: false,
            ..Self::default()
        }
    }

    /// Fine-tuning defaults by the number of available views.
    pub fn nvs(views: usize) -> Self {
        Self {
            steps: if views <= 1 {
                ONE_VIEW_NVS_STEPS
            } else {
                THREE_VIEW_NVS_STEPS
            },
            ..Self::default()
        }
    }

    pub fn effective_batch(&self) -> usize {
        self.micro_batch * self.grad_accumulation
    }

    pub fn validate(&self) -> Result<()> {
        if self.micro_batch == 0 || self.grad_accumulation == 0 {
            return Err(Error::Config("micro-batch and accumulation must be positive".into()));
        }
        if self.optimizer.learning_rate.is_nan() || self.optimizer.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Mock,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub mock: MockConfig,
    pub external: ExternalAdapterConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            mock: MockConfig::default(),
            external: ExternalAdapterConfig::default(),
        }
    }
}

/// Contents of a run config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub backend: BackendConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.effective_batch(), 9);
        assert_eq!(c.optimizer.learning_rate, 0.09);
        assert_eq!((c.optimizer.beta1, c.optimizer.beta2), (0.9, 0.999));
        assert_eq!(c.optimizer.weight_decay, 1e-2);
        assert_eq!(TrainConfig::nvs(1).steps, 1500);
        assert_eq!(TrainConfig::nvs(3).steps, 3000);
        assert_eq!(TrainConfig::pretrain().steps, 100_000);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = RunConfig::from_toml("[train]\nsteps = 12\n[train.optimizer]\nlearning_rate = 0.01\n").unwrap();
        assert_eq!(partial.train.steps, 12);
        assert_eq!(partial.train.optimizer.learning_rate, 0.01);
        assert_eq!(partial.train.optimizer.beta1, 0.9);
        assert!(matches!(RunConfig::from_toml("train = 3"), Err(Error::Config(_))));
    }
}
