//! Shared machinery for every training regime: sample preparation, mapper
//! backpropagation through the backend loss, and the accumulation loop.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::backend::{DiffusionBackend, LayerGradients, LossSample};
use crate::conditioning::{
    assemble_request, build_prompt, sample_text_template, ConditioningRequest, LayerConditioning,
    PromptTemplate, SceneBinding, SceneSlot, TemplatePool, TokenizedPrompt, ViewBinding,
};
use crate::data::{augment, sample_seed, AugmentationConfig};
use crate::encoding::FourierEncoder;
use crate::error::{Error, Result};
use crate::geometry::{PoseNormalizer, PoseVector};
use crate::image::Image;
use crate::mapper::TokenMapper;
use crate::training::config::{SceneSampling, TrainConfig};
use crate::training::log::{now_seconds, StepRecord};
use crate::training::optim::AdamW;

/// A mapper with the frozen encoder that feeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct MapperState {
    pub mapper: TokenMapper,
    pub encoder: FourierEncoder,
}

impl MapperState {
    pub fn params_digest(&self) -> String {
        params_digest(self.mapper.params())
    }
}

pub fn params_digest(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Everything trainable, plus the pose normalization it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub view: MapperState,
    pub scenes: BTreeMap<String, MapperState>,
    pub normalizer: PoseNormalizer,
    pub reference_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainView {
    pub index: u32,
    pub image: Image,
    pub pose: PoseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainScene {
    pub id: String,
    pub views: Vec<TrainView>,
}

/// What fills the `{SCENE}` slot during training.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenePrompt {
    Literal(String),
    /// The scene's own learned token.
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradientMask {
    pub view: bool,
    pub scenes: bool,
}

#[derive(Debug, Clone)]
pub struct LoopPlan<'a> {
    pub scenes: &'a [TrainScene],
    pub prompt: ScenePrompt,
    /// `None` uses the fixed default template.
    pub pool: Option<&'a TemplatePool>,
    /// `None` resizes to `output` without augmentation.
    pub augmentation: Option<AugmentationConfig>,
    pub output: (usize, usize),
    pub mask: GradientMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub view: Option<Vec<f64>>,
    pub scenes: BTreeMap<String, Vec<f64>>,
}

impl Gradients {
    /// Zero buffers for the view mapper and the mappers of scenes in `plan`,
    /// as enabled by its mask.
    pub fn zeros(models: &Models, plan: &LoopPlan<'_>) -> Self {
        Self {
            view: plan.mask.view.then(|| vec![0.0; models.view.mapper.params().len()]),
            scenes: trainable_scenes(models, plan)
                .map(|(id, s)| (id.to_string(), vec![0.0; s.mapper.params().len()]))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, weight: f64) {
        if let (Some(a), Some(b)) = (&mut self.view, &other.view) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += weight * y);
        }
        for (id, b) in &other.scenes {
            if let Some(a) = self.scenes.get_mut(id) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += weight * y);
            }
        }
    }

    /// Groups with at least one nonzero entry: `"view"` and `"scene:<id>"`.
    pub fn nonzero_groups(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.view.as_ref().is_some_and(|g| g.iter().any(|&v| v != 0.0)) {
            out.push("view".to_string());
        }
        for (id, g) in &self.scenes {
            if g.iter().any(|&v| v != 0.0) {
                out.push(format!("scene:{id}"));
            }
        }
        out
    }
}

fn trainable_scenes<'m>(
    models: &'m Models,
    plan: &LoopPlan<'_>,
) -> impl Iterator<Item = (&'m str, &'m MapperState)> {
    let ids: Vec<String> = if plan.mask.scenes && matches!(plan.prompt, ScenePrompt::Token) {
        plan.scenes.iter().map(|s| s.id.clone()).collect()
    } else {
        Vec::new()
    };
    models
        .scenes
        .iter()
        .filter(move |(id, _)| ids.contains(id))
        .map(|(id, s)| (id.as_str(), s))
}

/// One fully drawn training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub scene: usize,
    pub view: usize,
    pub prompt: TokenizedPrompt,
    pub sample: LossSample,
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || StandardNormal.sample(rng))
}

/// Draws, in order: augmentation, timestep, noise, template.
pub fn prepare_sample<R: Rng + ?Sized>(
    backend: &dyn DiffusionBackend,
    plan: &LoopPlan<'_>,
    scene: usize,
    view: usize,
    rng: &mut R,
) -> Result<PreparedSample> {
    let s = &plan.scenes[scene];
    let v = &s.views[view];
    let img = match &plan.augmentation {
        Some(cfg) => augment(&v.image, cfg, rng),
        None => v.image.resize(plan.output.0, plan.output.1),
    };
    let latent = backend.encode_image(&img)?;
    let t = rng.random_range(1..=backend.descriptor().timesteps);
    let noise = standard_normal_vec(rng, latent.len());
    let fixed;
    let template = match plan.pool {
        Some(pool) => sample_text_template(pool, rng)?,
        None => {
            fixed = PromptTemplate::default_viewed();
            &fixed
        }
    };
    let slot = match &plan.prompt {
        ScenePrompt::Literal(word) => SceneSlot::Literal(word.clone()),
        ScenePrompt::Token => SceneSlot::Token(s.id.clone()),
    };
    let prompt = build_prompt(backend, template, &slot)?;
    Ok(PreparedSample {
        scene,
        view,
        prompt,
        sample: LossSample {
            latent,
            noise,
            timestep: t,
        },
    })
}

/// Builds the request binding the view mapper (and the scene's mapper when
/// the prompt carries its token).
pub fn bind_request<'m>(
    models: &'m Models,
    prompt: TokenizedPrompt,
    pose: Option<PoseVector>,
    scene_id: Option<&str>,
) -> Result<ConditioningRequest<'m>> {
    let view = match (prompt.view_position, pose) {
        (Some(_), Some(pose)) => Some(ViewBinding {
            mapper: &models.view.mapper,
            encoder: &models.view.encoder,
            pose,
            ref_norm: models.reference_norm,
        }),
        (Some(_), None) => return Err(Error::Template("prompt has a view token but no pose".into())),
        (None, _) => None,
    };
    let scene = match (prompt.scene_position, scene_id) {
        (Some(_), Some(id)) => {
            let s = models
                .scenes
                .get(id)
                .ok_or_else(|| Error::Data(format!("no scene mapper for {id:?}")))?;
            Some(SceneBinding {
                mapper: &s.mapper,
                encoder: &s.encoder,
                ref_norm: models.reference_norm,
            })
        }
        _ => None,
    };
    assemble_request(prompt, view, scene)
}

fn gradient_at(layer: &LayerGradients, pos: usize, injections: bool) -> Option<&Array1<f64>> {
    let list = if injections {
        &layer.injections
    } else {
        &layer.overrides
    };
    list.iter().find(|(p, _)| *p == pos).map(|(_, g)| g)
}

/// Loss of one sample; adds `weight * d loss / d params` into `grads` for
/// every group the mask enables.
pub fn sample_gradients(
    backend: &dyn DiffusionBackend,
    models: &Models,
    plan: &LoopPlan<'_>,
    prepared: &PreparedSample,
    grads: &mut Gradients,
    weight: f64,
) -> Result<f64> {
    let scene = &plan.scenes[prepared.scene];
    let pose = scene.views[prepared.view].pose.clone();
    let scene_id = matches!(plan.prompt, ScenePrompt::Token).then_some(scene.id.as_str());
    let request = bind_request(models, prepared.prompt.clone(), Some(pose), scene_id)?;
    let t = prepared.sample.timestep;
    let mut layers = Vec::new();
    let mut caches = Vec::new();
    for l in 0..backend.descriptor().layer_count {
        let (cond, cache) = request.resolve_with_caches(t, l)?;
        layers.push(cond);
        caches.push(cache);
    }
    let out = backend.denoise_loss(&prepared.sample, &request.prompt, &layers)?;

    for (layer, cache) in out.layers.iter().zip(&caches) {
        if let (Some(g), Some(pos), Some((_, fc))) =
            (grads.view.as_mut(), request.prompt.view_position, cache.view.as_ref())
        {
            if let Some(gt) = gradient_at(layer, pos, false) {
                models.view.mapper.backward(fc, &(gt * weight), None, g);
            }
        }
        if let (Some(id), Some(pos), Some((_, fc))) =
            (scene_id, request.prompt.scene_position, cache.scene.as_ref())
        {
            if let Some(g) = grads.scenes.get_mut(id) {
                let gt = gradient_at(layer, pos, false).map(|v| v * weight);
                let gb = gradient_at(layer, pos, true).map(|v| v * weight);
                if let Some(gt) = gt {
                    models.scenes[id].mapper.backward(fc, &gt, gb.as_ref(), g);
                }
            }
        }
    }
    Ok(out.loss)
}

fn draw_pair(config: &TrainConfig, scenes: &[TrainScene], step: u64, slot: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(config.seed, "", u32::MAX, step, slot));
    match config.scene_sampling {
        SceneSampling::UniformPairs => {
            let total: usize = scenes.iter().map(|s| s.views.len()).sum();
            let mut k = rng.random_range(0..total);
            for (i, s) in scenes.iter().enumerate() {
                if k < s.views.len() {
                    return (i, k);
                }
                k -= s.views.len();
            }
            unreachable!("index within total")
        }
        SceneSampling::UniformScenes => {
            let i = rng.random_range(0..scenes.len());
            (i, rng.random_range(0..scenes[i].views.len()))
        }
    }
}

/// One optimizer step's worth of gradients: `grad_accumulation` micro-batches
/// of `micro_batch` samples, each keyed by `(step, slot)`.
pub fn step_gradients(
    backend: &dyn DiffusionBackend,
    models: &Models,
    plan: &LoopPlan<'_>,
    config: &TrainConfig,
    step: u64,
) -> Result<(f64, Gradients, Vec<SampleRecord>)> {
    let mut total = Gradients::zeros(models, plan);
    let mut loss = 0.0;
    let mut records = Vec::with_capacity(config.effective_batch());
    let eff = config.effective_batch() as f64;
    for a in 0..config.grad_accumulation {
        let mut micro = Gradients::zeros(models, plan);
        for b in 0..config.micro_batch {
            let slot = (a * config.micro_batch + b) as u64;
            let (si, vi) = draw_pair(config, plan.scenes, step, slot);
            let scene = &plan.scenes[si];
            let seed = sample_seed(config.seed, &scene.id, scene.views[vi].index, step, slot);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prepared = prepare_sample(backend, plan, si, vi, &mut rng)?;
            let l = sample_gradients(
                backend,
                models,
                plan,
                &prepared,
                &mut micro,
                1.0 / config.micro_batch as f64,
            )?;
            loss += l / eff;
            records.push(SampleRecord {
                step,
                scene: si,
                view: scene.views[vi].index,
                timestep: prepared.sample.timestep,
                loss: l,
            });
        }
        total.add_scaled(&micro, 1.0 / config.grad_accumulation as f64);
    }
    Ok((loss, total, records))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub step: u64,
    pub scene: usize,
    pub view: u32,
    pub timestep: u32,
    pub loss: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LoopOutcome {
    pub steps: Vec<StepRecord>,
    pub samples: Vec<SampleRecord>,
}

/// Called after every optimizer step with the 1-based step number.
pub type StepHook<'h> = dyn FnMut(u64, &Models, &StepRecord) -> Result<()> + 'h;

pub struct Optimizers {
    view: Option<AdamW>,
    scenes: BTreeMap<String, AdamW>,
}

impl Optimizers {
    pub fn new(models: &Models, plan: &LoopPlan<'_>, config: &TrainConfig) -> Self {
        Self {
            view: plan
                .mask
                .view
                .then(|| AdamW::new(config.optimizer, models.view.mapper.params().len())),
            scenes: trainable_scenes(models, plan)
                .map(|(id, s)| (id.to_string(), AdamW::new(config.optimizer, s.mapper.params().len())))
                .collect(),
        }
    }

    pub fn apply(&mut self, models: &mut Models, grads: &Gradients) {
        if let (Some(opt), Some(g)) = (self.view.as_mut(), grads.view.as_ref()) {
            opt.step(models.view.mapper.params_mut(), g);
        }
        for (id, g) in &grads.scenes {
            if let (Some(opt), Some(state)) = (self.scenes.get_mut(id), models.scenes.get_mut(id)) {
                opt.step(state.mapper.params_mut(), g);
            }
        }
    }
}

/// Runs `config.steps` optimizer steps. Aborts if the backend's weight
/// digest changes.
pub fn run_loop(
    backend: &dyn DiffusionBackend,
    models: &mut Models,
    plan: &LoopPlan<'_>,
    config: &TrainConfig,
    hook: Option<&mut StepHook<'_>>,
    keep_samples: bool,
) -> Result<LoopOutcome> {
    config.validate()?;
    if plan.scenes.is_empty() || plan.scenes.iter().any(|s| s.views.is_empty()) {
        return Err(Error::EmptyTrainSet);
    }
    let digest = backend.weights_digest();
    let mut optimizers = Optimizers::new(models, plan, config);
    let mut outcome = LoopOutcome::default();
    let mut hook = hook;
    for step in 0..config.steps {
        let (loss, grads, samples) = step_gradients(backend, models, plan, config, step)?;
        let after = backend.weights_digest();
        if after != digest {
            return Err(Error::FrozenBackendViolation {
                before: digest,
                after,
            });
        }
        optimizers.apply(models, &grads);
        let record = StepRecord {
            step: step + 1,
            loss,
            lr: config.optimizer.learning_rate,
            timestamp: now_seconds(),
        };
        if let Some(h) = hook.as_mut() {
            h(step + 1, models, &record)?;
        }
        outcome.steps.push(record);
        if keep_samples {
            outcome.samples.extend(samples);
        }
    }
    Ok(outcome)
}

/// Fixed, noise-seeded timesteps for comparing conditionings without
/// sampling variance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalProtocol {
    pub timesteps: Vec<u32>,
    pub noise_seed: u64,
}

impl EvalProtocol {
    /// Every tenth timestep starting at 1.
    pub fn strided(timesteps: u32) -> Self {
        let stride = (timesteps / 10).max(1);
        Self {
            timesteps: (1..=timesteps).step_by(stride as usize).collect(),
            noise_seed: 0x6576_616c,
        }
    }
}

/// Mean denoising loss over the protocol's timesteps for conditionings
/// produced by `layers_at(t)`.
pub fn evaluation_loss(
    backend: &dyn DiffusionBackend,
    prompt: &TokenizedPrompt,
    latent: &Array1<f64>,
    protocol: &EvalProtocol,
    layers_at: impl Fn(u32) -> Result<Vec<LayerConditioning>>,
) -> Result<f64> {
    let mut total = 0.0;
    for &t in &protocol.timesteps {
        let mut rng = ChaCha8Rng::seed_from_u64(protocol.noise_seed ^ t as u64);
        let sample = LossSample {
            latent: latent.clone(),
            noise: standard_normal_vec(&mut rng, latent.len()),
            timestep: t,
        };
        total += backend.denoise_loss(&sample, prompt, &layers_at(t)?)?.loss;
    }
    Ok(total / protocol.timesteps.len() as f64)
}

/// [`evaluation_loss`] for a mapper-bound request.
pub fn request_loss(
    backend: &dyn DiffusionBackend,
    request: &ConditioningRequest<'_>,
    latent: &Array1<f64>,
    protocol: &EvalProtocol,
) -> Result<f64> {
    evaluation_loss(backend, &request.prompt, latent, protocol, |t| {
        (0..backend.descriptor().layer_count)
            .map(|l| request.resolve(t, l))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::MockBackend;
    use crate::backend::reference_norm;
    use crate::data::synth_scene;
    use crate::geometry::PoseKind;
    use crate::training::regimes::{fit_normalizer, init_scene_state, init_view_state, train_scene};

    fn fixture(backend: &MockBackend, config: &TrainConfig) -> (Models, Vec<TrainScene>) {
        let a = synth_scene(4, 16, 1).unwrap().scene_data();
        let b = synth_scene(4, 16, 2).unwrap().scene_data();
        let poses: Vec<_> = a.poses().into_iter().chain(b.poses()).collect();
        let normalizer = fit_normalizer(config.pose_kind, &poses, "t").unwrap();
        let scenes = vec![
            train_scene(&a, &normalizer).unwrap().0,
            train_scene(&b, &normalizer).unwrap().0,
        ];
        let models = Models {
            view: init_view_state(backend, config).unwrap(),
            scenes: [&a, &b]
                .iter()
                .map(|s| (s.id.clone(), init_scene_state(backend, config, &s.id).unwrap()))
                .collect(),
            normalizer,
            reference_norm: reference_norm(backend, "object").unwrap(),
        };
        (models, scenes)
    }

    fn plan(scenes: &[TrainScene], mask: GradientMask) -> LoopPlan<'_> {
        LoopPlan {
            scenes,
            prompt: ScenePrompt::Token,
            pool: None,
            augmentation: Some(AugmentationConfig::multi_view((16, 16))),
            output: (16, 16),
            mask,
        }
    }

    const BOTH: GradientMask = GradientMask {
        view: true,
        scenes: true,
    };

    #[test]
    fn sample_gradients_match_finite_differences() {
        let backend = MockBackend::new(3);
        let config = TrainConfig {
            pose_kind: PoseKind::Spherical,
            ..TrainConfig::default()
        };
        let (models, scenes) = fixture(&backend, &config);
        let plan = plan(&scenes, BOTH);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prepared = prepare_sample(&backend, &plan, 1, 2, &mut rng).unwrap();
        let loss_of = |m: &Models| {
            let mut g = Gradients::zeros(m, &plan);
            sample_gradients(&backend, m, &plan, &prepared, &mut g, 1.0).unwrap()
        };
        let mut grads = Gradients::zeros(&models, &plan);
        sample_gradients(&backend, &models, &plan, &prepared, &mut grads, 1.0).unwrap();
        let id = scenes[1].id.clone();
        let h = 1e-6;
        let mut pick = ChaCha8Rng::seed_from_u64(9);
        for k in 0..20 {
            let scene_side = k % 2 == 1;
            let len = if scene_side {
                models.scenes[&id].mapper.params().len()
            } else {
                models.view.mapper.params().len()
            };
            let i = pick.random_range(0..len);
            let bump = |delta: f64| {
                let mut m = models.clone();
                let p = if scene_side {
                    m.scenes.get_mut(&id).unwrap().mapper.params_mut()
                } else {
                    m.view.mapper.params_mut()
                };
                p[i] += delta;
                loss_of(&m)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let analytic = if scene_side {
                grads.scenes[&id][i]
            } else {
                grads.view.as_ref().unwrap()[i]
            };
            let scale = numeric.abs().max(analytic.abs()).max(1e-8);
            assert!((numeric - analytic).abs() / scale < 1e-4, "k={k} i={i}: {numeric} vs {analytic}");
        }
        assert!(grads.scenes[&scenes[0].id].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn accumulation_matches_single_batch() {
        let backend = MockBackend::new(1);
        let base = TrainConfig {
            pose_kind: PoseKind::Spherical,
            ..TrainConfig::default()
        };
        let (models, scenes) = fixture(&backend, &base);
        let plan = plan(&scenes, BOTH);
        let split = step_gradients(&backend, &models, &plan, &base, 4).unwrap();
        let flat = TrainConfig {
            micro_batch: 9,
            grad_accumulation: 1,
            ..base.clone()
        };
        let whole = step_gradients(&backend, &models, &plan, &flat, 4).unwrap();
        assert!((split.0 - whole.0).abs() < 1e-10);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-10);
        assert!(close(split.1.view.as_ref().unwrap(), whole.1.view.as_ref().unwrap()));
        for (id, g) in &split.1.scenes {
            assert!(close(g, &whole.1.scenes[id]));
        }
    }

    #[test]
    fn mask_limits_nonzero_groups() {
        let backend = MockBackend::new(1);
        let config = TrainConfig {
            pose_kind: PoseKind::Spherical,
            ..TrainConfig::default()
        };
        let (models, scenes) = fixture(&backend, &config);
        let only_scenes = GradientMask {
            view: false,
            scenes: true,
        };
        let (_, g, _) = step_gradients(&backend, &models, &plan(&scenes, only_scenes), &config, 0).unwrap();
        assert!(g.view.is_none());
        assert_eq!(g.nonzero_groups().len(), 2);
        assert!(g.nonzero_groups().iter().all(|n| n.starts_with("scene:")));

        let one = &scenes[..1];
        let (_, g, _) = step_gradients(&backend, &models, &plan(one, BOTH), &config, 0).unwrap();
        assert_eq!(g.nonzero_groups(), vec!["view".to_string(), format!("scene:{}", one[0].id)]);
    }

    #[test]
    fn frozen_digest_is_checked_every_step() {
        struct Drifting {
            inner: MockBackend,
            calls: std::sync::atomic::AtomicU32,
        }
        impl DiffusionBackend for Drifting {
            fn descriptor(&self) -> &crate::backend::BackendDescriptor {
                self.inner.descriptor()
            }
            fn schedule(&self) -> &crate::backend::NoiseSchedule {
                self.inner.schedule()
            }
            fn tokenize(&self, text: &str) -> Result<Vec<crate::backend::Token>> {
                self.inner.tokenize(text)
            }
            fn word_embedding(&self, word: &str) -> Result<Array1<f64>> {
                self.inner.word_embedding(word)
            }
            fn encode_layer(
                &self,
                prompt: &TokenizedPrompt,
                layer: &LayerConditioning,
            ) -> Result<ndarray::Array2<f64>> {
                self.inner.encode_layer(prompt, layer)
            }
            fn denoise_loss(
                &self,
                sample: &LossSample,
                prompt: &TokenizedPrompt,
                layers: &[LayerConditioning],
            ) -> Result<crate::backend::LossOutput> {
                self.inner.denoise_loss(sample, prompt, layers)
            }
            fn sample_image(&self, r: &ConditioningRequest<'_>, steps: u32, seed: u64) -> Result<Image> {
                self.inner.sample_image(r, steps, seed)
            }
            fn encode_image(&self, image: &Image) -> Result<Array1<f64>> {
                self.inner.encode_image(image)
            }
            fn decode_latent(&self, latent: &Array1<f64>) -> Result<Image> {
                self.inner.decode_latent(latent)
            }
            fn default_sampling_steps(&self) -> u32 {
                self.inner.default_sampling_steps()
            }
            fn weights_digest(&self) -> String {
                let n = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if n >= 3 {
                    "tampered".into()
                } else {
                    self.inner.weights_digest()
                }
            }
        }
        let backend = Drifting {
            inner: MockBackend::new(0),
            calls: Default::default(),
        };
        let config = TrainConfig {
            pose_kind: PoseKind::Spherical,
            steps: 10,
            micro_batch: 1,
            grad_accumulation: 1,
            ..TrainConfig::default()
        };
        let (mut models, scenes) = fixture(&backend.inner, &config);
        let err = run_loop(&backend, &mut models, &plan(&scenes, BOTH), &config, None, false).unwrap_err();
        assert!(matches!(err, Error::FrozenBackendViolation { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn strided_protocol() {
        assert_eq!(EvalProtocol::strided(100).timesteps, (0..10).map(|k| 1 + 10 * k).collect::<Vec<_>>());
    }
}
