//! The three training regimes and the free-embedding calibration oracle.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{reference_norm, DiffusionBackend, LossSample};
use crate::conditioning::{build_prompt, LayerConditioning, PromptTemplate, SceneSlot, TemplatePool};
use crate::data::{sample_seed, AugmentationConfig, SceneData};
use crate::encoding::FourierEncoder;
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, NormalizationStats, PoseKind, PoseNormalizer};
use crate::mapper::{MapperConfig, MapperRole, TokenMapper};
use crate::training::checkpoint::{Checkpoint, Regime};
use crate::training::config::TrainConfig;
use crate::training::engine::{
    evaluation_loss, params_digest, run_loop, standard_normal_vec, EvalProtocol, GradientMask,
    LoopOutcome, LoopPlan, MapperState, Models, ScenePrompt, StepHook, TrainScene, TrainView,
};
use crate::training::optim::AdamW;

/// A finished run: the checkpoint plus what happened along the way.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: LoopOutcome,
    pub warnings: Vec<String>,
}

/// Fits a normalizer of `kind`. A single matrix pose has no spread, so every
/// entry is treated as constant and maps to zero.
pub fn fit_normalizer(kind: PoseKind, poses: &[CameraPose], source: &str) -> Result<PoseNormalizer> {
    match (kind, poses) {
        (_, []) => Err(Error::EmptyTrainSet),
        (PoseKind::ProjectionMatrix, [only]) => {
            let m = match only {
                CameraPose::Spherical(s) => CameraPose::from_matrix(s.to_matrix())?,
                p => *p,
            };
            let entries = m.matrix_entries();
            Ok(PoseNormalizer::ProjectionMatrix(NormalizationStats {
                min: entries,
                max: entries,
                source: source.to_string(),
            }))
        }
        _ => PoseNormalizer::fit(kind, poses, source),
    }
}

fn mapper_config(backend: &dyn DiffusionBackend, config: &TrainConfig, role: MapperRole) -> MapperConfig {
    let d = backend.descriptor().embed_dim;
    let base = match role {
        MapperRole::View => MapperConfig::view(d),
        MapperRole::Scene => MapperConfig::scene(d),
    };
    MapperConfig {
        input_dim: config.encoder.output_dim,
        hidden_dim: config.hidden_dim,
        blocks: config.blocks,
        bypass_alpha: config.bypass_alpha,
        reference_word: config.reference_word.clone(),
        leaky_slope: config.leaky_slope,
        ..base
    }
}

pub fn init_view_state(backend: &dyn DiffusionBackend, config: &TrainConfig) -> Result<MapperState> {
    let seed = sample_seed(config.seed, "view-mapper", 0, 0, 0);
    Ok(MapperState {
        mapper: TokenMapper::init(mapper_config(backend, config, MapperRole::View), MapperRole::View, seed)?,
        encoder: FourierEncoder::view(config.encoder.clone(), config.pose_kind.vector_len())?,
    })
}

pub fn init_scene_state(
    backend: &dyn DiffusionBackend,
    config: &TrainConfig,
    scene_id: &str,
) -> Result<MapperState> {
    let seed = sample_seed(config.seed, scene_id, 0, 0, 1);
    Ok(MapperState {
        mapper: TokenMapper::init(mapper_config(backend, config, MapperRole::Scene), MapperRole::Scene, seed)?,
        encoder: FourierEncoder::scene(config.encoder.clone())?,
    })
}

/// Normalizes every view's pose; returns the scene and how many views were
/// clamped.
pub fn train_scene(scene: &SceneData, normalizer: &PoseNormalizer) -> Result<(TrainScene, usize)> {
    if scene.views.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let mut clamped = 0;
    let views = scene
        .views
        .iter()
        .map(|v| {
            let pose = normalizer.normalize(&v.pose)?;
            clamped += pose.was_clamped() as usize;
            Ok(TrainView {
                index: v.index,
                image: v.image.clone(),
                pose,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        TrainScene {
            id: scene.id.clone(),
            views,
        },
        clamped,
    ))
}

fn output_shape(backend: &dyn DiffusionBackend) -> (usize, usize) {
    let (h, w, _) = backend.descriptor().image_shape;
    (h, w)
}

fn augmentation(backend: &dyn DiffusionBackend, config: &TrainConfig, views: usize) -> Option<AugmentationConfig> {
    config
        .augment
        .then(|| AugmentationConfig::for_view_count(views, output_shape(backend)))
}

fn checkpoint(
    backend: &dyn DiffusionBackend,
    regime: Regime,
    config: &TrainConfig,
    models: Models,
) -> Checkpoint {
    Checkpoint {
        regime,
        config: config.clone(),
        models,
        descriptor_digest: backend.descriptor().digest(),
        step: config.steps,
    }
}

/// Optimizes the view mapper alone on one scene, with a literal class word
/// in the scene slot.
pub fn train_single_scene(
    backend: &dyn DiffusionBackend,
    scene: &SceneData,
    config: &TrainConfig,
    hook: Option<&mut StepHook<'_>>,
) -> Result<TrainOutcome> {
    backend.descriptor().validate()?;
    let normalizer = fit_normalizer(config.pose_kind, &scene.poses(), &scene.id)?;
    let (ts, _) = train_scene(scene, &normalizer)?;
    let mut models = Models {
        view: init_view_state(backend, config)?,
        scenes: BTreeMap::new(),
        normalizer,
        reference_norm: reference_norm(backend, &config.reference_word)?,
    };
    let pool = TemplatePool::bundled();
    let scenes = [ts];
    let plan = LoopPlan {
        scenes: &scenes,
        prompt: ScenePrompt::Literal(config.class_word.clone()),
        pool: config.prompt_pool.then_some(&pool),
        augmentation: augmentation(backend, config, scene.views.len()),
        output: output_shape(backend),
        mask: GradientMask {
            view: true,
            scenes: false,
        },
    };
    let log = run_loop(backend, &mut models, &plan, config, hook, false)?;
    Ok(TrainOutcome {
        checkpoint: checkpoint(backend, Regime::SingleScene, config, models),
        log,
        warnings: Vec::new(),
    })
}

/// Jointly optimizes one shared view mapper and a bypass scene mapper per
/// scene. Poses are normalized with statistics over every scene's views.
pub fn pretrain_multi_scene(
    backend: &dyn DiffusionBackend,
    scenes: &[SceneData],
    config: &TrainConfig,
    hook: Option<&mut StepHook<'_>>,
    keep_samples: bool,
) -> Result<TrainOutcome> {
    backend.descriptor().validate()?;
    if scenes.len() < 2 {
        return Err(Error::Data(format!(
            "pretraining needs at least 2 scenes, got {}",
            scenes.len()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in scenes {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateScene(s.id.clone()));
        }
    }
    let poses: Vec<CameraPose> = scenes.iter().flat_map(|s| s.poses()).collect();
    let normalizer = fit_normalizer(config.pose_kind, &poses, "pretraining")?;
    let train = scenes
        .iter()
        .map(|s| train_scene(s, &normalizer).map(|(t, _)| t))
        .collect::<Result<Vec<_>>>()?;
    let mut models = Models {
        view: init_view_state(backend, config)?,
        scenes: scenes
            .iter()
            .map(|s| Ok((s.id.clone(), init_scene_state(backend, config, &s.id)?)))
            .collect::<Result<_>>()?,
        normalizer,
        reference_norm: reference_norm(backend, &config.reference_word)?,
    };
    let pool = TemplatePool::bundled();
    let min_views = scenes.iter().map(|s| s.views.len()).min().unwrap_or(0);
    let plan = LoopPlan {
        scenes: &train,
        prompt: ScenePrompt::Token,
        pool: config.prompt_pool.then_some(&pool),
        augmentation: augmentation(backend, config, min_views),
        output: output_shape(backend),
        mask: GradientMask {
            view: true,
            scenes: true,
        },
    };
    let log = run_loop(backend, &mut models, &plan, config, hook, keep_samples)?;
    Ok(TrainOutcome {
        checkpoint: checkpoint(backend, Regime::Pretrain, config, models),
        log,
        warnings: Vec::new(),
    })
}

/// Trains a fresh scene mapper on a novel scene's few views against the
/// pretrained, frozen view mapper and stored pose statistics.
pub fn finetune_nvs(
    backend: &dyn DiffusionBackend,
    scene: &SceneData,
    pretrained: &Checkpoint,
    config: &TrainConfig,
    hook: Option<&mut StepHook<'_>>,
) -> Result<TrainOutcome> {
    backend.descriptor().validate()?;
    pretrained.check_backend(backend)?;
    let normalizer = pretrained.models.normalizer.clone();
    let (ts, clamped) = train_scene(scene, &normalizer)?;
    let mut warnings = Vec::new();
    if clamped > 0 {
        let msg = format!(
            "{clamped} of {} view(s) in {:?} fall outside the stored pose range and were clamped",
            scene.views.len(),
            scene.id
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut scene_config = pretrained.config.clone();
    scene_config.seed = config.seed;
    let mut models = Models {
        view: pretrained.models.view.clone(),
        scenes: [(scene.id.clone(), init_scene_state(backend, &scene_config, &scene.id)?)].into(),
        normalizer,
        reference_norm: pretrained.models.reference_norm,
    };
    let before = models.view.params_digest();
    let pool = TemplatePool::bundled();
    let scenes = [ts];
    let plan = LoopPlan {
        scenes: &scenes,
        prompt: ScenePrompt::Token,
        pool: config.prompt_pool.then_some(&pool),
        augmentation: augmentation(backend, config, scene.views.len()),
        output: output_shape(backend),
        mask: GradientMask {
            view: false,
            scenes: true,
        },
    };
    let log = run_loop(backend, &mut models, &plan, config, hook, false)?;
    let after = models.view.params_digest();
    if before != after {
        return Err(Error::MapperConfig(format!(
            "frozen view mapper changed during fine-tuning ({before} -> {after})"
        )));
    }
    Ok(TrainOutcome {
        checkpoint: checkpoint(backend, Regime::Nvs, config, models),
        log,
        warnings,
    })
}

/// Per-view losses of the free-embedding oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleLosses {
    pub view_indices: Vec<u32>,
    /// Evaluation loss with the reference word's embedding in the view slot.
    pub initial: Vec<f64>,
    pub r#final: Vec<f64>,
    pub embeddings: Vec<Array1<f64>>,
}

/// Optimizes one unconstrained embedding per training view, shared across
/// timesteps and layers, in the view slot of the default prompt. Images are
/// used unaugmented; losses are reported under `protocol`.
pub fn oracle_free_embedding(
    backend: &dyn DiffusionBackend,
    scene: &SceneData,
    config: &TrainConfig,
    protocol: &EvalProtocol,
) -> Result<OracleLosses> {
    config.validate()?;
    if scene.views.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let prompt = build_prompt(
        backend,
        &PromptTemplate::default_viewed(),
        &SceneSlot::Literal(config.class_word.clone()),
    )?;
    let pos = prompt
        .view_position
        .ok_or_else(|| Error::Template("default template lost its view slot".into()))?;
    let layers = backend.descriptor().layer_count as usize;
    let with = |e: &Array1<f64>| {
        let cond = LayerConditioning {
            overrides: vec![(pos, e.clone())],
            injections: Vec::new(),
        };
        vec![cond; layers]
    };
    let (h, w) = output_shape(backend);
    let init = backend.word_embedding(&config.reference_word)?;

    let mut out = OracleLosses {
        view_indices: Vec::new(),
        initial: Vec::new(),
        r#final: Vec::new(),
        embeddings: Vec::new(),
    };
    for view in &scene.views {
        let latent = backend.encode_image(&view.image.resize(h, w))?;
        let mut emb = init.clone();
        let mut opt = AdamW::new(config.optimizer, emb.len());
        let eval = |e: &Array1<f64>| evaluation_loss(backend, &prompt, &latent, protocol, |_| Ok(with(e)));
        out.initial.push(eval(&emb)?);
        for step in 0..config.steps {
            let mut grad = vec![0.0; emb.len()];
            let n = config.effective_batch();
            for slot in 0..n as u64 {
                let seed = sample_seed(config.seed, &scene.id, view.index, step, slot);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let t = rng.random_range(1..=backend.descriptor().timesteps);
                let sample = LossSample {
                    latent: latent.clone(),
                    noise: standard_normal_vec(&mut rng, latent.len()),
                    timestep: t,
                };
                let res = backend.denoise_loss(&sample, &prompt, &with(&emb))?;
                for layer in &res.layers {
                    for (p, g) in &layer.overrides {
                        if *p == pos {
                            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b / n as f64);
                        }
                    }
                }
            }
            opt.step(emb.as_slice_mut().expect("contiguous"), &grad);
        }
        out.r#final.push(eval(&emb)?);
        out.view_indices.push(view.index);
        out.embeddings.push(emb);
    }
    Ok(out)
}

/// The digest of every mapper's parameters, keyed `"view"` / `"scene:<id>"`.
pub fn mapper_digests(models: &Models) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    out.insert("view".to_string(), params_digest(models.view.mapper.params()));
    for (id, s) in &models.scenes {
        out.insert(format!("scene:{id}"), s.params_digest());
    }
    out
}
