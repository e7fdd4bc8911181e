//! Converts DTU scans to scene manifests.
//!
//! Expected layout, per scan:
//!
//! ```text
//! <root>/scan<N>/image/000000.png ...
//! <root>/scan<N>/cams/00000000_cam.txt ...   (or <root>/Cameras/ shared)
//! ```
//!
//! Camera files hold a world-to-camera `extrinsic` 4x4 block followed by
//! an `intrinsic` 3x3 block. Images are referenced in place, unmodified.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::manifest::{ManifestEntry, SceneManifest};
use crate::error::{Error, Result};

/// Parses the `extrinsic` block of a camera file.
pub fn parse_extrinsic(text: &str, path: &Path) -> Result<[[f64; 4]; 4]> {
    let mut lines = text.lines().map(str::trim).skip_while(|l| *l != "extrinsic");
    if lines.next().is_none() {
        return Err(Error::parse(path, "no extrinsic block"));
    }
    let mut m = [[0.0; 4]; 4];
    for row in &mut m {
        let line = lines.next().ok_or_else(|| Error::parse(path, "truncated extrinsic block"))?;
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::parse(path, e)))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != 4 {
            return Err(Error::parse(path, format!("extrinsic row has {} values", values.len())));
        }
        row.copy_from_slice(&values);
    }
    Ok(m)
}

/// Inverts a rigid world-to-camera transform.
pub fn camera_to_world(w2c: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut c2w = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            c2w[i][j] = w2c[j][i];
        }
        c2w[i][3] = -(0..3).map(|k| w2c[k][i] * w2c[k][3]).sum::<f64>();
    }
    c2w[3][3] = 1.0;
    c2w
}

fn cams_dir(root: &Path, scan: u32) -> Result<PathBuf> {
    let local = root.join(format!("scan{scan}")).join("cams");
    let shared = root.join("Cameras");
    [local, shared]
        .into_iter()
        .find(|p| p.is_dir())
        .ok_or_else(|| Error::Data(format!("no camera directory for scan{scan} under {}", root.display())))
}

/// Builds the manifest for `scan` and writes it to `out/manifest.json`.
pub fn convert_dtu(root: &Path, scan: u32, out: &Path) -> Result<SceneManifest> {
    let image_dir = root.join(format!("scan{scan}")).join("image");
    let cams = cams_dir(root, scan)?;
    let mut names: Vec<String> = fs::read_dir(&image_dir)
        .map_err(|e| Error::io(&image_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Data(format!("no images in {}", image_dir.display())));
    }

    let mut entries = Vec::with_capacity(names.len());
    let mut size = None;
    for name in names {
        let stem = name.trim_end_matches(".png");
        let view: u32 = stem
            .parse()
            .map_err(|_| Error::Data(format!("image name {name:?} is not a view index")))?;
        let cam_path = cams.join(format!("{view:08}_cam.txt"));
        let text = fs::read_to_string(&cam_path).map_err(|e| Error::io(&cam_path, e))?;
        let c2w = camera_to_world(&parse_extrinsic(&text, &cam_path)?);
        let image = fs::canonicalize(image_dir.join(&name)).map_err(|e| Error::io(image_dir.join(&name), e))?;
        if size.is_none() {
            let (w, h) = image::image_dimensions(&image).map_err(|e| Error::parse(&image, e))?;
            size = Some((h as usize, w as usize));
        }
        entries.push(ManifestEntry {
            image,
            matrix: c2w.iter().flatten().copied().collect(),
            view_index: view,
            spherical: None,
        });
    }
    let manifest = SceneManifest {
        scene_id: format!("scan{scan}"),
        image_size: size.expect("at least one image"),
        entries,
        base_dir: out.to_path_buf(),
    };
    manifest.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}
