//! View-controlled generation and novel-view evaluation reports.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{sample_image, DiffusionBackend};
use crate::conditioning::{build_prompt, ConditioningRequest, PromptTemplate, SceneSlot};
use crate::data::{sample_seed, SceneManifest, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::metrics::{psnr, ssim, PerceptualAdapter};
use crate::geometry::{classify_view, CameraPose, ViewClass};
use crate::image::Image;
use crate::training::checkpoint::{to_bytes, Checkpoint};
use crate::training::engine::{bind_request, Models};

/// Builds a request for `template` with the given scene fill and, when the
/// template has a view slot, camera pose.
pub fn conditioned_request<'m>(
    backend: &dyn DiffusionBackend,
    models: &'m Models,
    template: &PromptTemplate,
    scene: &SceneSlot,
    pose: Option<&CameraPose>,
) -> Result<ConditioningRequest<'m>> {
    let prompt = build_prompt(backend, template, scene)?;
    let pose = match (prompt.view_position, pose) {
        (Some(_), Some(p)) => Some(models.normalizer.normalize(p)?),
        _ => None,
    };
    let scene_id = match scene {
        SceneSlot::Token(id) => Some(id.as_str()),
        _ => None,
    };
    bind_request(models, prompt, pose, scene_id)
}

pub fn generate(
    backend: &dyn DiffusionBackend,
    models: &Models,
    template: &PromptTemplate,
    scene: &SceneSlot,
    pose: Option<&CameraPose>,
    steps: u32,
    seed: u64,
) -> Result<Image> {
    let request = conditioned_request(backend, models, template, scene, pose)?;
    sample_image(backend, &request, steps, seed)
}

/// What fills the scene slot when rendering from `ckpt` for `scene_id`: the
/// scene's own token when the checkpoint has one, else the class word.
pub fn scene_slot_for(ckpt: &Checkpoint, scene_id: &str) -> SceneSlot {
    if ckpt.models.scenes.contains_key(scene_id) {
        SceneSlot::Token(scene_id.to_string())
    } else {
        SceneSlot::Literal(ckpt.config.class_word.clone())
    }
}

/// Per-view seed: independent of which other views are evaluated.
pub fn view_seed(global_seed: u64, scene_id: &str, view: u32) -> u64 {
    sample_seed(global_seed, scene_id, view, 0, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub scene_id: String,
    pub view_index: u32,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// Absent when no perceptual adapter is configured.
    pub lpips: Option<f64>,
    pub class: Option<ViewClass>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub lpips: Option<f64>,
    pub evaluated: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub split: SplitSpec,
    pub checkpoint_id: String,
    pub perceptual_adapter: Option<String>,
    /// Where metrics are computed; predictions are resized to match.
    pub metric_resolution: String,
    pub seed: u64,
    pub sampling_steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_view: Vec<ViewMetrics>,
    pub aggregates: Aggregates,
    pub metadata: ReportMetadata,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricsReport {
    pub fn new(per_view: Vec<ViewMetrics>, metadata: ReportMetadata) -> Self {
        let ok = || per_view.iter().filter(|v| v.error.is_none());
        let aggregates = Aggregates {
            psnr: mean(ok().map(|v| v.psnr)),
            ssim: mean(ok().map(|v| v.ssim)),
            lpips: mean(ok().map(|v| v.lpips)),
            evaluated: ok().count(),
            failed: per_view.len() - ok().count(),
        };
        Self {
            per_view,
            aggregates,
            metadata,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut out = format!(
            "{:<12} {:>5} {:>10} {:>8} {:>8}  {}\n",
            "scene", "view", "psnr", "ssim", "lpips", "class"
        );
        for v in &self.per_view {
            let class = match (&v.error, v.class) {
                (Some(e), _) => format!("error: {e}"),
                (None, Some(ViewClass::Interpolation)) => "interpolation".into(),
                (None, Some(ViewClass::Extrapolation)) => "extrapolation".into(),
                (None, None) => "-".into(),
            };
            out += &format!(
                "{:<12} {:>5} {:>10} {:>8} {:>8}  {}\n",
                v.scene_id,
                v.view_index,
                f(v.psnr),
                f(v.ssim),
                f(v.lpips),
                class
            );
        }
        let a = &self.aggregates;
        out += &format!(
            "{:<12} {:>5} {:>10} {:>8} {:>8}  ({} ok, {} failed)\n",
            "mean",
            "",
            f(a.psnr),
            f(a.ssim),
            f(a.lpips),
            a.evaluated,
            a.failed
        );
        if let Some(id) = &self.metadata.perceptual_adapter {
            out += &format!("lpips adapter: {id}\n");
        }
        out
    }
}

/// First 16 hex digits of the checkpoint's serialized sha256.
pub fn checkpoint_id(ckpt: &Checkpoint) -> String {
    hex::encode(Sha256::digest(to_bytes(ckpt)))[..16].to_string()
}

/// Scores one prediction against ground truth at the ground truth's size.
pub fn score(
    pred: &Image,
    truth: &Image,
    adapter: Option<&dyn PerceptualAdapter>,
) -> Result<(f64, f64, Option<f64>)> {
    let pred = if pred.shape() == truth.shape() {
        pred.clone()
    } else {
        pred.resize(truth.height(), truth.width())
    };
    let lp = adapter.map(|a| a.distance(&pred, truth)).transpose()?;
    Ok((psnr(&pred, truth)?, ssim(&pred, truth)?, lp))
}

#[derive(Clone, Copy)]
pub struct EvalOptions<'a> {
    pub seed: u64,
    /// `None` uses the backend's default.
    pub steps: Option<u32>,
    pub adapter: Option<&'a dyn PerceptualAdapter>,
}

/// Renders every requested view at its pose and scores it against the
/// manifest's image. Per-view failures are recorded, not fatal.
pub fn evaluate_nvs(
    ckpt: &Checkpoint,
    manifest: &SceneManifest,
    split: &SplitSpec,
    backend: &dyn DiffusionBackend,
    views: &[u32],
    options: EvalOptions<'_>,
) -> Result<MetricsReport> {
    ckpt.check_backend(backend)?;
    if let Some(v) = views.iter().find(|v| !split.test_views.contains(v)) {
        return Err(Error::Data(format!("view {v} is not a test view of regime {}", split.regime)));
    }
    let kind = ckpt.models.normalizer.kind();
    let steps = options.steps.unwrap_or_else(|| backend.default_sampling_steps());
    let slot = scene_slot_for(ckpt, &manifest.scene_id);
    let template = PromptTemplate::default_viewed();
    let train_poses: Vec<CameraPose> = manifest
        .entries
        .iter()
        .filter(|e| split.train_views.contains(&e.view_index))
        .map(|e| e.pose(kind))
        .collect::<Result<_>>()?;

    let per_view = views
        .iter()
        .map(|&v| {
            let mut m = ViewMetrics {
                scene_id: manifest.scene_id.clone(),
                view_index: v,
                psnr: None,
                ssim: None,
                lpips: None,
                class: None,
                error: None,
            };
            let run = || -> Result<(f64, f64, Option<f64>, Option<ViewClass>)> {
                let entry = manifest
                    .entry(v)
                    .ok_or_else(|| Error::Data(format!("view {v} missing from manifest")))?;
                let pose = entry.pose(kind)?;
                let truth = Image::load_png(&manifest.image_path(entry))?;
                let class = if train_poses.is_empty() {
                    None
                } else {
                    Some(classify_view(&pose, &train_poses)?)
                };
                let seed = view_seed(options.seed, &manifest.scene_id, v);
                let pred = generate(backend, &ckpt.models, &template, &slot, Some(&pose), steps, seed)?;
                let (p, s, l) = score(&pred, &truth, options.adapter)?;
                Ok((p, s, l, class))
            };
            match run() {
                Ok((p, s, l, c)) => {
                    m.psnr = Some(p);
                    m.ssim = Some(s);
                    m.lpips = l;
                    m.class = c;
                }
                Err(e) => m.error = Some(e.to_string()),
            }
            m
        })
        .collect();

    Ok(MetricsReport::new(
        per_view,
        ReportMetadata {
            split: split.clone(),
            checkpoint_id: checkpoint_id(ckpt),
            perceptual_adapter: options.adapter.map(|a| a.identity()),
            metric_resolution: "ground-truth".into(),
            seed: options.seed,
            sampling_steps: steps,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::MockPerceptual;

    #[test]
    fn identity_scores() {
        let img = Image::from_fn(16, 16, 3, |y, x, c| ((y * 5 + x * 3 + c) % 11) as f64 / 10.0);
        let p = MockPerceptual::new(0);
        let (ps, ss, lp) = score(&img, &img, Some(&p)).unwrap();
        assert_eq!(ps, 100.0);
        assert!((ss - 1.0).abs() < 1e-12);
        assert_eq!(lp, Some(0.0));
    }

    #[test]
    fn aggregates_are_means_of_successful_views() {
        let view = |i: u32, p: f64, err: bool| ViewMetrics {
            scene_id: "s".into(),
            view_index: i,
            psnr: (!err).then_some(p),
            ssim: (!err).then_some(p / 100.0),
            lpips: None,
            class: None,
            error: err.then(|| "missing".into()),
        };
        let meta = ReportMetadata {
            split: crate::data::dtu_splits(crate::data::ViewRegime::One),
            checkpoint_id: "x".into(),
            perceptual_adapter: None,
            metric_resolution: "ground-truth".into(),
            seed: 0,
            sampling_steps: 1,
        };
        let r = MetricsReport::new(vec![view(1, 10.0, false), view(2, 0.0, true), view(3, 20.0, false)], meta);
        assert!((r.aggregates.psnr.unwrap() - 15.0).abs() < 1e-12);
        assert_eq!(r.aggregates.lpips, None);
        assert_eq!((r.aggregates.evaluated, r.aggregates.failed), (2, 1));
        assert!(r.table().contains("error: missing"));
    }
}
