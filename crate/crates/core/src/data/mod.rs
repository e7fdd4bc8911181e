//! Datasets: manifests, fixed splits, augmentation, synthetic scenes.

pub mod augment;
pub mod dtu;
pub mod manifest;
pub mod splits;
pub mod synth;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::BackendDescriptor;

pub use augment::{augment, augment_with_trace, AugmentTrace, AugmentationConfig};
pub use dtu::convert_dtu;
pub use manifest::{load_scene, ManifestEntry, SceneData, SceneManifest, View};
pub use splits::{dtu_splits, SplitSpec, ViewRegime};
pub use synth::{synth_scene, SynthScene};

/// Seed for one sample's randomness, independent of batching and worker
/// scheduling.
pub fn sample_seed(global_seed: u64, scene_id: &str, view_index: u32, step: u64, slot: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update((scene_id.len() as u64).to_le_bytes());
    h.update(scene_id.as_bytes());
    h.update(view_index.to_le_bytes());
    h.update(step.to_le_bytes());
    h.update(slot.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Train,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl Resolution {
    pub fn hw(self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Working resolution for a stage. A mock descriptor passes its own image
/// shape through; `None` selects the real-backend sizes for DTU's 4:3
/// landscape frames.
pub fn resize_policy(stage: Stage, mock: Option<&BackendDescriptor>) -> Resolution {
    match (mock, stage) {
        (Some(d), _) => Resolution {
            width: d.image_shape.1,
            height: d.image_shape.0,
        },
        (None, Stage::Train) => Resolution {
            width: 512,
            height: 384,
        },
        (None, Stage::Inference) => Resolution {
            width: 768,
            height: 576,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::MockBackend;
    use crate::backend::DiffusionBackend;

    #[test]
    fn real_backend_sizes() {
        let t = resize_policy(Stage::Train, None);
        assert_eq!((t.width, t.height), (512, 384));
        let i = resize_policy(Stage::Inference, None);
        assert_eq!((i.width, i.height), (768, 576));
    }

    #[test]
    fn mock_passthrough() {
        let b = MockBackend::new(0);
        for s in [Stage::Train, Stage::Inference] {
            assert_eq!(resize_policy(s, Some(b.descriptor())).hw(), (16, 16));
        }
    }

    #[test]
    fn sample_seed_separates_fields() {
        let base = sample_seed(1, "a", 2, 3, 0);
        assert_eq!(base, sample_seed(1, "a", 2, 3, 0));
        for other in [
            sample_seed(2, "a", 2, 3, 0),
            sample_seed(1, "b", 2, 3, 0),
            sample_seed(1, "a", 3, 3, 0),
            sample_seed(1, "a", 2, 4, 0),
            sample_seed(1, "a", 2, 3, 1),
        ] {
            assert_ne!(base, other);
        }
    }
}
