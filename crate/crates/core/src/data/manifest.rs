//! Per-scene JSON manifests.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, PoseKind, SphericalPose};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory unless absolute.
    pub image: PathBuf,
    /// Camera-to-world matrix, 16 numbers row-major.
    pub matrix: Vec<f64>,
    pub view_index: u32,
    /// Exact angles, when the scene was generated on a sphere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spherical: Option<SphericalPose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene_id: String,
    /// `(H, W)`
    pub image_size: (usize, usize),
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SceneManifest {
    /// Checks view uniqueness and camera-to-world matrices.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.view_index) {
                return Err(Error::DuplicateView(e.view_index));
            }
            CameraPose::from_row_major(&e.matrix)?;
        }
        Ok(())
    }

    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.image.is_absolute() {
            entry.image.clone()
        } else {
            self.base_dir.join(&entry.image)
        }
    }

    pub fn entry(&self, view_index: u32) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.view_index == view_index)
    }

    pub fn view_indices(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.view_index).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

impl ManifestEntry {
    /// The pose in the requested parameterization. Spherical poses come from
    /// stored angles when present, else from the camera center.
    pub fn pose(&self, kind: PoseKind) -> Result<CameraPose> {
        let matrix = CameraPose::from_row_major(&self.matrix)?;
        match (kind, self.spherical) {
            (PoseKind::ProjectionMatrix, _) => Ok(matrix),
            (PoseKind::Spherical, Some(s)) => Ok(CameraPose::Spherical(s)),
            (PoseKind::Spherical, None) => Ok(CameraPose::Spherical(matrix.to_spherical()?)),
        }
    }
}

/// Reads and validates a manifest, checking that every image exists.
pub fn load_scene(path: &Path) -> Result<SceneManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: SceneManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate()?;
    for e in &manifest.entries {
        let p = manifest.image_path(e);
        if !p.is_file() {
            return Err(Error::Data(format!(
                "view {} of scene {:?}: missing image {}",
                e.view_index,
                manifest.scene_id,
                p.display()
            )));
        }
    }
    Ok(manifest)
}

/// One posed view held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub index: u32,
    pub pose: CameraPose,
    pub image: Image,
}

/// A scene with its images decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneData {
    pub id: String,
    pub views: Vec<View>,
}

impl SceneData {
    pub fn load(manifest: &SceneManifest, kind: PoseKind) -> Result<Self> {
        let views = manifest
            .entries
            .iter()
            .map(|e| {
                Ok(View {
                    index: e.view_index,
                    pose: e.pose(kind)?,
                    image: Image::load_png(&manifest.image_path(e))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: manifest.scene_id.clone(),
            views,
        })
    }

    pub fn view(&self, index: u32) -> Option<&View> {
        self.views.iter().find(|v| v.index == index)
    }

    /// Keeps the listed views in the given order. Errors on an absent index.
    pub fn subset(&self, indices: &[u32]) -> Result<Self> {
        let views = indices
            .iter()
            .map(|&i| {
                self.view(i).cloned().ok_or_else(|| {
                    Error::Data(format!("scene {:?} has no view {i}", self.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: self.id.clone(),
            views,
        })
    }

    /// Re-expresses every pose in the `kind` parameterization.
    pub fn with_pose_kind(&self, kind: PoseKind) -> Result<Self> {
        let views = self
            .views
            .iter()
            .map(|v| {
                let pose = match (kind, v.pose) {
                    (PoseKind::ProjectionMatrix, CameraPose::Spherical(s)) => CameraPose::from_matrix(s.to_matrix())?,
                    (PoseKind::Spherical, p @ CameraPose::ProjectionMatrix { .. }) => {
                        CameraPose::Spherical(p.to_spherical()?)
                    }
                    (_, p) => p,
                };
                Ok(View { pose, ..v.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: self.id.clone(),
            views,
        })
    }

    pub fn poses(&self) -> Vec<CameraPose> {
        self.views.iter().map(|v| v.pose).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: [f64; 16] = [
        1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 1.0,
    ];

    fn write_fixture(dir: &Path, entries: Vec<ManifestEntry>) -> PathBuf {
        for e in &entries {
            Image::filled(4, 4, 3, 0.5).save_png(&dir.join(&e.image)).unwrap();
        }
        let m = SceneManifest {
            scene_id: "s".into(),
            image_size: (4, 4),
            entries,
            base_dir: PathBuf::new(),
        };
        let path = dir.join("manifest.json");
        m.save(&path).unwrap();
        path
    }

    fn entry(i: u32, matrix: [f64; 16]) -> ManifestEntry {
        ManifestEntry {
            image: format!("{i}.png").into(),
            matrix: matrix.to_vec(),
            view_index: i,
            spherical: None,
        }
    }

    #[test]
    fn loads_valid_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), (0..49).map(|i| entry(i, IDENTITY)).collect());
        let m = load_scene(&path).unwrap();
        assert_eq!(m.entries.len(), 49);
        let scene = SceneData::load(&m, PoseKind::ProjectionMatrix).unwrap();
        assert_eq!(scene.views.len(), 49);
    }

    #[test]
    fn duplicate_view_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let mut es = vec![entry(3, IDENTITY), entry(4, IDENTITY)];
        es[1].view_index = 3;
        es[1].image = "x.png".into();
        let err = load_scene(&write_fixture(dir.path(), es)).unwrap_err();
        assert!(matches!(err, Error::DuplicateView(3)));
        assert!(err.to_string().contains('3'));
    }

    #[test]
    fn bad_bottom_row_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = IDENTITY;
        m[12] = 0.5;
        let err = load_scene(&write_fixture(dir.path(), vec![entry(0, m)])).unwrap_err();
        assert!(err.to_string().contains("not a camera-to-world matrix"));
    }

    #[test]
    fn missing_image_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), vec![entry(0, IDENTITY)]);
        fs::remove_file(dir.path().join("0.png")).unwrap();
        let err = load_scene(&path).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert_eq!(err.exit_code(), 2);
    }
}
