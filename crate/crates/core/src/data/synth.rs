//! Synthetic view-dependent scenes for desk-scale runs.
//!
//! Cameras sit on a sphere with polar angle in [60, 90] degrees and azimuth
//! in [0, 160] degrees. Each view renders a Gaussian blob whose center
//! moves with the camera, plus a static secondary blob fixed per scene.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::manifest::{ManifestEntry, SceneData, SceneManifest, View};
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, SphericalPose};
use crate::image::Image;

pub const THETA_RANGE_DEG: (f64, f64) = (60.0, 90.0);
pub const PHI_RANGE_DEG: (f64, f64) = (0.0, 160.0);
pub const CAMERA_RADIUS: f64 = 3.0;

const MAIN_AMPLITUDE: f64 = 0.6;
const SECONDARY_AMPLITUDE: f64 = 0.3;

/// A per-scene blob that does not move with the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticBlob {
    pub x: f64,
    pub y: f64,
    pub amplitude: f64,
    pub sigma: f64,
}

impl StaticBlob {
    pub fn from_seed(seed: u64, side: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce9_e0b1_0b00_0001);
        let unit = side as f64 / 16.0;
        Self {
            x: rng.random_range(3.0..13.0) * unit,
            y: rng.random_range(3.0..13.0) * unit,
            amplitude: SECONDARY_AMPLITUDE,
            sigma: 2.0 * unit,
        }
    }
}

/// Pixel coordinates of the moving blob's center. Injective in the angles.
pub fn blob_center(theta_deg: f64, phi_deg: f64, side: usize) -> (f64, f64) {
    let s = side as f64;
    let u = (phi_deg - PHI_RANGE_DEG.0) / (PHI_RANGE_DEG.1 - PHI_RANGE_DEG.0);
    let v = (theta_deg - THETA_RANGE_DEG.0) / (THETA_RANGE_DEG.1 - THETA_RANGE_DEG.0);
    (s / 2.0 + 6.0 * s / 16.0 * (u - 0.5), s / 2.0 + 3.0 * s / 16.0 * (v - 0.5))
}

/// Gray render replicated to three channels, values in [0, 1].
pub fn render_view(theta_deg: f64, phi_deg: f64, side: usize, secondary: Option<StaticBlob>) -> Image {
    let (cx, cy) = blob_center(theta_deg, phi_deg, side);
    let sigma = 3.0 * side as f64 / 16.0;
    let gauss = |px: f64, py: f64, x0: f64, y0: f64, s: f64| {
        (-((px - x0).powi(2) + (py - y0).powi(2)) / (2.0 * s * s)).exp()
    };
    let mut gray = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v = MAIN_AMPLITUDE * gauss(px, py, cx, cy, sigma);
            if let Some(b) = secondary {
                v += b.amplitude * gauss(px, py, b.x, b.y, b.sigma);
            }
            gray.push(v.clamp(0.0, 1.0));
        }
    }
    Image::from_gray(side, side, 3, &gray).expect("square render")
}

/// `n` angle pairs on a near-square lattice covering both ranges, row-major
/// from low polar angle and low azimuth.
pub fn lattice_angles(n: usize) -> Vec<(f64, f64)> {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let frac = |i: usize, count: usize| if count > 1 { i as f64 / (count - 1) as f64 } else { 0.5 };
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .take(n)
        .map(|(r, c)| {
            (
                THETA_RANGE_DEG.0 + (THETA_RANGE_DEG.1 - THETA_RANGE_DEG.0) * frac(r, rows),
                PHI_RANGE_DEG.0 + (PHI_RANGE_DEG.1 - PHI_RANGE_DEG.0) * frac(c, cols),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub manifest: SceneManifest,
    pub images: Vec<Image>,
}

impl SynthScene {
    pub fn scene_data(&self) -> SceneData {
        let views = self
            .manifest
            .entries
            .iter()
            .zip(&self.images)
            .map(|(e, img)| View {
                index: e.view_index,
                pose: CameraPose::Spherical(e.spherical.expect("synthetic entries carry angles")),
                image: img.clone(),
            })
            .collect();
        SceneData {
            id: self.manifest.scene_id.clone(),
            views,
        }
    }

    /// Writes PNGs and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (e, img) in self.manifest.entries.iter().zip(&self.images) {
            img.save_png(&dir.join(&e.image))?;
        }
        self.manifest.save(&dir.join("manifest.json"))
    }
}

pub fn synth_scene(n_views: usize, side: usize, seed: u64) -> Result<SynthScene> {
    if n_views < 3 {
        return Err(Error::InsufficientPoses {
            needed: 3,
            got: n_views,
        });
    }
    synth_scene_at(&lattice_angles(n_views), side, seed, &format!("synth-{seed}"))
}

/// Renders one view per `(theta, phi)` pair in degrees.
pub fn synth_scene_at(angles: &[(f64, f64)], side: usize, seed: u64, scene_id: &str) -> Result<SynthScene> {
    if side < 4 {
        return Err(Error::Data(format!("synthetic grid size {side} is below 4")));
    }
    let secondary = StaticBlob::from_seed(seed, side);
    let mut entries = Vec::with_capacity(angles.len());
    let mut images = Vec::with_capacity(angles.len());
    for (i, &(theta, phi)) in angles.iter().enumerate() {
        let sph = SphericalPose::from_degrees(theta, phi, CAMERA_RADIUS)?;
        let matrix = sph.to_matrix();
        entries.push(ManifestEntry {
            image: format!("view_{i:03}.png").into(),
            matrix: matrix.iter().flatten().copied().collect(),
            view_index: i as u32,
            spherical: Some(sph),
        });
        images.push(render_view(theta, phi, side, Some(secondary)));
    }
    Ok(SynthScene {
        manifest: SceneManifest {
            scene_id: scene_id.to_string(),
            image_size: (side, side),
            entries,
            base_dir: Default::default(),
        },
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::load_scene;
    use crate::geometry::PoseKind;

    #[test]
    fn equal_angles_render_identically() {
        let b = Some(StaticBlob::from_seed(3, 16));
        assert_eq!(render_view(70.0, 40.0, 16, b), render_view(70.0, 40.0, 16, b));
    }

    #[test]
    fn center_is_monotone_in_azimuth() {
        for theta in [60.0, 75.0, 90.0] {
            let xs: Vec<f64> = (0..=16).map(|k| blob_center(theta, 10.0 * k as f64, 16).0).collect();
            assert!(xs.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn lattice_covers_ranges() {
        let a = lattice_angles(25);
        assert_eq!(a.len(), 25);
        assert_eq!(a[0], (60.0, 0.0));
        assert_eq!(a[24], (90.0, 160.0));
        let b = lattice_angles(6);
        assert_eq!(b.len(), 6);
    }

    #[test]
    fn pixels_in_unit_range() {
        let s = synth_scene(9, 16, 1).unwrap();
        assert!(s.images.iter().all(|i| i.data().iter().all(|v| (0.0..=1.0).contains(v))));
        assert!(synth_scene(2, 16, 1).is_err());
    }

    #[test]
    fn written_scene_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let s = synth_scene(6, 16, 2).unwrap();
        s.write(dir.path()).unwrap();
        let m = load_scene(&dir.path().join("manifest.json")).unwrap();
        let loaded = SceneData::load(&m, PoseKind::Spherical).unwrap();
        let direct = s.scene_data();
        for (a, b) in loaded.views.iter().zip(&direct.views) {
            assert_eq!(a.pose, b.pose);
            for (u, v) in a.image.data().iter().zip(b.image.data()) {
                assert!((u - v).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}
