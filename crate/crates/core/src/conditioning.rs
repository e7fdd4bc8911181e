//! Prompt templates, placeholder placement, and per-(t, layer) conditioning
//! requests.
//!
//! A template carries `{VIEW}` and optionally `{SCENE}`. Resolution replaces
//! them with placeholder tokens that never collide with vocabulary words. A
//! [`ConditioningRequest`] binds those placeholders to mappers so the token
//! embeddings (and scene bypass vectors) can be re-evaluated at every
//! denoising step and cross-attention layer.

use ndarray::Array1;
use rand::Rng;

use crate::backend::{DiffusionBackend, Placeholder, Token};
use crate::encoding::{ConditioningInput, FourierEncoder};
use crate::error::{Error, Result};
use crate::geometry::PoseVector;
use crate::mapper::{ForwardCache, MapperRole, TokenMapper, TokenPrediction};

/// Sequence length the text encoder consumes.
pub const PAD_LENGTH: usize = 77;

const VIEW_SLOT: &str = "{VIEW}";
const SCENE_SLOT: &str = "{SCENE}";

const BUNDLED_TEMPLATES: &str = include_str!("../resources/templates.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    /// Exactly one `{VIEW}`, at most one `{SCENE}`.
    Viewed,
    /// No `{VIEW}`, exactly one `{SCENE}`. Used to probe scene tokens alone.
    SceneOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub text: String,
    pub kind: TemplateKind,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        Self::with_kind(id, text, TemplateKind::Viewed)
    }

    pub fn scene_only(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        Self::with_kind(id, text, TemplateKind::SceneOnly)
    }

    fn with_kind(id: impl Into<String>, text: impl Into<String>, kind: TemplateKind) -> Result<Self> {
        let text = text.into();
        let views = text.matches(VIEW_SLOT).count();
        let scenes = text.matches(SCENE_SLOT).count();
        match kind {
            TemplateKind::Viewed if views != 1 => {
                return Err(Error::Template(format!(
                    "expected exactly one {VIEW_SLOT}, found {views} in {text:?}"
                )))
            }
            TemplateKind::SceneOnly if views != 0 || scenes != 1 => {
                return Err(Error::Template(format!(
                    "scene-only template needs one {SCENE_SLOT} and no {VIEW_SLOT}: {text:?}"
                )))
            }
            _ => {}
        }
        if scenes > 1 {
            return Err(Error::Template(format!("duplicate {SCENE_SLOT} in {text:?}")));
        }
        Ok(Self {
            id: id.into(),
            text,
            kind,
        })
    }

    pub fn has_scene_slot(&self) -> bool {
        self.text.contains(SCENE_SLOT)
    }

    /// The standard training template.
    pub fn default_viewed() -> Self {
        Self::new("photo", "{VIEW}. a photo of a {SCENE}").expect("valid template")
    }
}

/// What fills the `{SCENE}` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SceneSlot {
    Literal(String),
    Token(String),
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplatePool {
    templates: Vec<PromptTemplate>,
}

impl TemplatePool {
    /// One template per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let templates = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, line)| PromptTemplate::new(format!("t{i:02}"), line))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { templates })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TEMPLATES).expect("bundled templates are valid")
    }

    pub fn from_templates(templates: Vec<PromptTemplate>) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

pub fn sample_text_template<'p, R: Rng + ?Sized>(
    pool: &'p TemplatePool,
    rng: &mut R,
) -> Result<&'p PromptTemplate> {
    if pool.is_empty() {
        return Err(Error::Template("empty template pool".into()));
    }
    Ok(&pool.templates[rng.random_range(0..pool.len())])
}

/// A prompt after placeholder substitution and tokenization, padded to
/// [`PAD_LENGTH`].
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedPrompt {
    pub text: String,
    pub tokens: Vec<Token>,
    /// Tokens before padding, including start and end markers.
    pub length: usize,
    pub view_position: Option<usize>,
    pub scene_position: Option<usize>,
}

pub fn build_prompt(
    backend: &dyn DiffusionBackend,
    template: &PromptTemplate,
    scene: &SceneSlot,
) -> Result<TokenizedPrompt> {
    let mut text = template.text.replace(VIEW_SLOT, &Placeholder::View.to_string());
    if template.has_scene_slot() {
        let fill = match scene {
            SceneSlot::Literal(word) => word.clone(),
            SceneSlot::Token(id) => Placeholder::Scene(id.clone()).to_string(),
            SceneSlot::Empty => {
                return Err(Error::Template(format!(
                    "template {:?} needs a scene word or token",
                    template.id
                )))
            }
        };
        text = text.replace(SCENE_SLOT, &fill);
    } else if let SceneSlot::Token(_) = scene {
        return Err(Error::Template(format!(
            "template {:?} has no {SCENE_SLOT} slot for a scene token",
            template.id
        )));
    }

    let body = backend.tokenize(&text)?;
    let length = body.len() + 2;
    if length > PAD_LENGTH {
        return Err(Error::PromptOverflow {
            len: length,
            max: PAD_LENGTH,
        });
    }
    let mut tokens = Vec::with_capacity(PAD_LENGTH);
    tokens.push(Token::Bos);
    tokens.extend(body);
    tokens.push(Token::Eos);
    tokens.resize(PAD_LENGTH, Token::Pad);

    let find = |want: fn(&Placeholder) -> bool| {
        tokens.iter().position(|t| matches!(t, Token::Placeholder(p) if want(p)))
    };
    let view_position = find(|p| matches!(p, Placeholder::View));
    let scene_position = find(|p| matches!(p, Placeholder::Scene(_)));
    Ok(TokenizedPrompt {
        text,
        tokens,
        length,
        view_position,
        scene_position,
    })
}

/// Token overrides and post-encoder injections for one `(t, layer)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerConditioning {
    pub overrides: Vec<(usize, Array1<f64>)>,
    pub injections: Vec<(usize, Array1<f64>)>,
}

#[derive(Debug, Clone)]
pub struct ViewBinding<'a> {
    pub mapper: &'a TokenMapper,
    pub encoder: &'a FourierEncoder,
    pub pose: PoseVector,
    pub ref_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SceneBinding<'a> {
    pub mapper: &'a TokenMapper,
    pub encoder: &'a FourierEncoder,
    pub ref_norm: f64,
}

/// Mapper activations from one resolution, for backpropagation.
#[derive(Debug, Clone)]
pub struct SlotCaches {
    pub view: Option<(TokenPrediction, ForwardCache)>,
    pub scene: Option<(TokenPrediction, ForwardCache)>,
}

#[derive(Debug, Clone)]
pub struct ConditioningRequest<'a> {
    pub prompt: TokenizedPrompt,
    pub view: Option<ViewBinding<'a>>,
    pub scene: Option<SceneBinding<'a>>,
}

pub fn assemble_request<'a>(
    prompt: TokenizedPrompt,
    view: Option<ViewBinding<'a>>,
    scene: Option<SceneBinding<'a>>,
) -> Result<ConditioningRequest<'a>> {
    match (&view, prompt.view_position) {
        (Some(v), Some(_)) => {
            if v.mapper.role() != MapperRole::View {
                return Err(Error::MapperConfig("view slot needs a view mapper".into()));
            }
            if v.pose.len() != v.encoder.pose_dim() {
                return Err(Error::DimensionMismatch {
                    expected: v.encoder.pose_dim(),
                    got: v.pose.len(),
                });
            }
        }
        (None, Some(_)) => return Err(Error::Template("prompt has a view token but no view mapper".into())),
        (Some(_), None) => return Err(Error::Template("view mapper given but prompt has no view token".into())),
        (None, None) => {}
    }
    match (&scene, prompt.scene_position) {
        (Some(s), Some(_)) => {
            if s.mapper.role() != MapperRole::Scene {
                return Err(Error::MapperConfig("scene slot needs a scene mapper".into()));
            }
        }
        (None, Some(_)) => return Err(Error::Template("prompt has a scene token but no scene mapper".into())),
        (Some(_), None) => return Err(Error::Template("scene mapper given but prompt has no scene token".into())),
        (None, None) => {}
    }
    Ok(ConditioningRequest { prompt, view, scene })
}

impl ConditioningRequest<'_> {
    /// A request with no mapper bindings (plain prompt).
    pub fn plain(prompt: TokenizedPrompt) -> ConditioningRequest<'static> {
        ConditioningRequest {
            prompt,
            view: None,
            scene: None,
        }
    }

    pub fn resolve(&self, timestep: u32, layer: u32) -> Result<LayerConditioning> {
        self.resolve_with_caches(timestep, layer).map(|(c, _)| c)
    }

    pub fn resolve_with_caches(
        &self,
        timestep: u32,
        layer: u32,
    ) -> Result<(LayerConditioning, SlotCaches)> {
        let mut out = LayerConditioning::default();
        let mut caches = SlotCaches {
            view: None,
            scene: None,
        };
        if let (Some(v), Some(pos)) = (&self.view, self.prompt.view_position) {
            let enc = v.encoder.encode(&ConditioningInput {
                timestep,
                layer,
                pose: &v.pose.values,
            })?;
            let (pred, cache) = v.mapper.forward(enc.view(), v.ref_norm)?;
            out.overrides.push((pos, pred.token.clone()));
            caches.view = Some((pred, cache));
        }
        if let (Some(s), Some(pos)) = (&self.scene, self.prompt.scene_position) {
            let enc = s.encoder.encode(&ConditioningInput {
                timestep,
                layer,
                pose: &[],
            })?;
            let (pred, cache) = s.mapper.forward(enc.view(), s.ref_norm)?;
            out.overrides.push((pos, pred.token.clone()));
            if let Some(b) = &pred.bypass {
                out.injections.push((pos, b.clone()));
            }
            caches.scene = Some((pred, cache));
        }
        Ok((out, caches))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::MockBackend;
    use crate::encoding::EncoderConfig;
    use crate::mapper::MapperConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn view_token_follows_start_of_text() {
        let backend = MockBackend::new(0);
        let t = PromptTemplate::new("p", "{VIEW}. a photo of a statue").unwrap();
        let p = build_prompt(&backend, &t, &SceneSlot::Empty).unwrap();
        assert_eq!(p.text, "<view>. a photo of a statue");
        assert_eq!(p.view_position, Some(1));
        assert_eq!(p.scene_position, None);
        assert_eq!(p.tokens.len(), PAD_LENGTH);
        assert_eq!(p.tokens[0], Token::Bos);
    }

    #[test]
    fn view_and_scene_positions() {
        let backend = MockBackend::new(0);
        let t = PromptTemplate::default_viewed();
        let p = build_prompt(&backend, &t, &SceneSlot::Token("scan9".into())).unwrap();
        assert_eq!(p.text, "<view>. a photo of a <scene:scan9>");
        assert_eq!(p.view_position, Some(1));
        assert_eq!(p.scene_position, Some(7));
        assert_eq!(p.tokens[p.length - 1], Token::Eos);
    }

    #[test]
    fn template_validation() {
        assert!(PromptTemplate::new("x", "a photo of a {SCENE}").is_err());
        assert!(PromptTemplate::new("x", "{VIEW} {VIEW}").is_err());
        assert!(PromptTemplate::new("x", "{VIEW} {SCENE} {SCENE}").is_err());
        assert!(PromptTemplate::scene_only("x", "a photo of a {SCENE}").is_ok());
        assert!(PromptTemplate::scene_only("x", "{VIEW}. a photo of a {SCENE}").is_err());
    }

    #[test]
    fn literal_slot_requires_filler() {
        let backend = MockBackend::new(0);
        let err = build_prompt(&backend, &PromptTemplate::default_viewed(), &SceneSlot::Empty).unwrap_err();
        assert!(matches!(err, Error::Template(_)));
    }

    #[test]
    fn overflow_is_reported() {
        let backend = MockBackend::new(0);
        let long = format!("{{VIEW}}.{}", " a photo".repeat(40));
        let t = PromptTemplate::new("long", long).unwrap();
        assert!(matches!(
            build_prompt(&backend, &t, &SceneSlot::Empty),
            Err(Error::PromptOverflow { .. })
        ));
    }

    #[test]
    fn bundled_pool_keeps_structure() {
        let pool = TemplatePool::bundled();
        assert_eq!(pool.len(), 27);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let t = sample_text_template(&pool, &mut rng).unwrap();
            assert_eq!(t.text.matches("{VIEW}").count(), 1);
            assert!(t.has_scene_slot());
        }
    }

    #[test]
    fn singleton_and_empty_pools() {
        let only = PromptTemplate::new("only", "{VIEW}. x").unwrap();
        let pool = TemplatePool::from_templates(vec![only.clone()]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(sample_text_template(&pool, &mut rng).unwrap(), &only);
        }
        assert!(sample_text_template(&TemplatePool::from_templates(vec![]), &mut rng).is_err());
    }

    #[test]
    fn pool_draws_are_uniform() {
        let pool = TemplatePool::bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut counts = vec![0usize; pool.len()];
        let n = 10_000;
        for _ in 0..n {
            let t = sample_text_template(&pool, &mut rng).unwrap();
            counts[pool.templates().iter().position(|x| x == t).unwrap()] += 1;
        }
        let p = 1.0 / pool.len() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma + 1.0, "count {c}");
        }
    }

    fn mappers(embed: usize) -> (TokenMapper, FourierEncoder, TokenMapper, FourierEncoder) {
        let v = TokenMapper::init(MapperConfig::view(embed), MapperRole::View, 1).unwrap();
        let ve = FourierEncoder::view(EncoderConfig::default(), 2).unwrap();
        let s = TokenMapper::init(MapperConfig::scene(embed), MapperRole::Scene, 2).unwrap();
        let se = FourierEncoder::scene(EncoderConfig::default()).unwrap();
        (v, ve, s, se)
    }

    #[test]
    fn pose_length_mismatch_errors() {
        let backend = MockBackend::new(0);
        let (v, ve, _, _) = mappers(backend.descriptor().embed_dim);
        let p = build_prompt(&backend, &PromptTemplate::new("p", "{VIEW}. a photo").unwrap(), &SceneSlot::Empty).unwrap();
        let pose = PoseVector { values: vec![0.0; 12], clamped: 0 };
        let err = assemble_request(p, Some(ViewBinding { mapper: &v, encoder: &ve, pose, ref_norm: 1.0 }), None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 12 }));
    }

    #[test]
    fn resolution_is_pure_and_pose_dependent() {
        let backend = MockBackend::new(0);
        let (v, ve, s, se) = mappers(backend.descriptor().embed_dim);
        let p = build_prompt(&backend, &PromptTemplate::default_viewed(), &SceneSlot::Token("a".into())).unwrap();
        let make = |x: f64| {
            assemble_request(
                p.clone(),
                Some(ViewBinding { mapper: &v, encoder: &ve, pose: PoseVector { values: vec![x, -x], clamped: 0 }, ref_norm: 1.0 }),
                Some(SceneBinding { mapper: &s, encoder: &se, ref_norm: 1.0 }),
            )
            .unwrap()
        };
        let a = make(0.1);
        let b = make(0.6);
        assert_eq!(a.resolve(10, 1).unwrap(), a.resolve(10, 1).unwrap());
        let ra = a.resolve(10, 1).unwrap();
        let rb = b.resolve(10, 1).unwrap();
        assert_ne!(ra.overrides[0].1, rb.overrides[0].1);
        assert_eq!(ra.overrides[1].1, rb.overrides[1].1);
        assert_eq!(ra.injections.len(), 1);
        assert_eq!(ra.injections[0].0, p.scene_position.unwrap());
    }
}
