//! The frozen diffusion backend seen by the rest of the crate.
//!
//! A backend tokenizes prompts, encodes them with token-level overrides and
//! additive post-encoder injections, evaluates the epsilon-prediction loss
//! with gradients flowing back to those overrides, and samples images.
//! Backend weights are never trained; [`DiffusionBackend::weights_digest`]
//! lets callers prove it.

pub mod external;
pub mod mock;

use std::fmt;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditioning::{ConditioningRequest, LayerConditioning, TokenizedPrompt};
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Placeholder {
    View,
    Scene(String),
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placeholder::View => write!(f, "<view>"),
            Placeholder::Scene(id) => write!(f, "<scene:{id}>"),
        }
    }
}

impl Placeholder {
    /// Parses `<view>` or `<scene:ID>`.
    pub fn parse(word: &str) -> Option<Self> {
        let inner = word.strip_prefix('<')?.strip_suffix('>')?;
        if inner == "view" {
            Some(Placeholder::View)
        } else {
            inner
                .strip_prefix("scene:")
                .filter(|id| !id.is_empty())
                .map(|id| Placeholder::Scene(id.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    Bos,
    Eos,
    Pad,
    Word(u32),
    Placeholder(Placeholder),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub embed_dim: usize,
    pub layer_count: u32,
    pub timesteps: u32,
    /// `(h, w, c)`
    pub latent_shape: (usize, usize, usize),
    /// `(H, W, 3)`
    pub image_shape: (usize, usize, usize),
    pub frozen: bool,
}

impl BackendDescriptor {
    pub fn latent_len(&self) -> usize {
        self.latent_shape.0 * self.latent_shape.1 * self.latent_shape.2
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.embed_dim,
            self.layer_count as usize,
            self.timesteps as usize,
            self.latent_len(),
            self.image_shape.0 * self.image_shape.1 * self.image_shape.2,
        ];
        if dims.contains(&0) {
            return Err(Error::Backend("descriptor dimensions must be positive".into()));
        }
        if !self.frozen {
            return Err(Error::Backend("backend must be frozen".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("descriptor serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Variance-preserving schedule with linearly spaced betas.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(timesteps: u32, beta_start: f64, beta_end: f64) -> Self {
        let n = timesteps as usize;
        let mut alpha_bar = Vec::with_capacity(n);
        let mut acc = 1.0;
        for i in 0..n {
            let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let beta = beta_start + frac * (beta_end - beta_start);
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Self { alpha_bar }
    }

    pub fn timesteps(&self) -> u32 {
        self.alpha_bar.len() as u32
    }

    /// Cumulative signal fraction at `t` in `[1, T]`.
    pub fn alpha_bar(&self, t: u32) -> Result<f64> {
        self.check(t)?;
        Ok(self.alpha_bar[t as usize - 1])
    }

    pub fn check(&self, t: u32) -> Result<()> {
        if t == 0 || t > self.timesteps() {
            return Err(Error::TimestepOutOfRange {
                t,
                max: self.timesteps(),
            });
        }
        Ok(())
    }

    /// `z_t = sqrt(abar) z0 + sqrt(1 - abar) eps`
    pub fn add_noise(&self, z0: &Array1<f64>, noise: &Array1<f64>, t: u32) -> Result<Array1<f64>> {
        let a = self.alpha_bar(t)?;
        Ok(z0 * a.sqrt() + noise * (1.0 - a).sqrt())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha_bar
    }
}

/// One term of the denoising objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    pub latent: Array1<f64>,
    pub noise: Array1<f64>,
    pub timestep: u32,
}

/// Loss gradient with respect to one layer's overrides and injections,
/// aligned with the [`LayerConditioning`] it was computed from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerGradients {
    pub overrides: Vec<(usize, Array1<f64>)>,
    pub injections: Vec<(usize, Array1<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// One entry per cross-attention layer.
    pub layers: Vec<LayerGradients>,
}

pub trait DiffusionBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn schedule(&self) -> &NoiseSchedule;

    /// Body tokens of `text`, without start/end markers.
    fn tokenize(&self, text: &str) -> Result<Vec<Token>>;

    fn word_embedding(&self, word: &str) -> Result<Array1<f64>>;

    /// Text-encoder output (`d x 77`) for one layer's conditioning.
    fn encode_layer(&self, prompt: &TokenizedPrompt, layer: &LayerConditioning) -> Result<Array2<f64>>;

    /// `mean((eps - eps_hat)^2)` with one conditioning per layer, and its
    /// gradient with respect to every override and injection.
    fn denoise_loss(
        &self,
        sample: &LossSample,
        prompt: &TokenizedPrompt,
        layers: &[LayerConditioning],
    ) -> Result<LossOutput>;

    fn sample_image(&self, request: &ConditioningRequest<'_>, steps: u32, seed: u64) -> Result<Image>;

    fn encode_image(&self, image: &Image) -> Result<Array1<f64>>;

    fn decode_latent(&self, latent: &Array1<f64>) -> Result<Image>;

    fn default_sampling_steps(&self) -> u32;

    /// Digest over every frozen weight.
    fn weights_digest(&self) -> String;
}

pub fn reference_norm(backend: &dyn DiffusionBackend, word: &str) -> Result<f64> {
    let e = backend.word_embedding(word)?;
    Ok(e.dot(&e).sqrt())
}

pub fn encode_text(
    backend: &dyn DiffusionBackend,
    request: &ConditioningRequest<'_>,
    timestep: u32,
    layer: u32,
) -> Result<Array2<f64>> {
    backend.schedule().check(timestep)?;
    if layer >= backend.descriptor().layer_count {
        return Err(Error::LayerOutOfRange {
            layer,
            count: backend.descriptor().layer_count,
        });
    }
    backend.encode_layer(&request.prompt, &request.resolve(timestep, layer)?)
}

/// Resolves the request at the sample's timestep for every layer and
/// evaluates the loss.
pub fn denoise_loss(
    backend: &dyn DiffusionBackend,
    sample: &LossSample,
    request: &ConditioningRequest<'_>,
) -> Result<LossOutput> {
    backend.schedule().check(sample.timestep)?;
    let layers = (0..backend.descriptor().layer_count)
        .map(|l| request.resolve(sample.timestep, l))
        .collect::<Result<Vec<_>>>()?;
    backend.denoise_loss(sample, &request.prompt, &layers)
}

pub fn sample_image(
    backend: &dyn DiffusionBackend,
    request: &ConditioningRequest<'_>,
    steps: u32,
    seed: u64,
) -> Result<Image> {
    if steps == 0 {
        return Err(Error::Backend("sampling needs at least one step".into()));
    }
    backend.sample_image(request, steps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_round_trip() {
        for p in [Placeholder::View, Placeholder::Scene("scan8".into())] {
            assert_eq!(Placeholder::parse(&p.to_string()), Some(p));
        }
        assert_eq!(Placeholder::parse("<scene:>"), None);
        assert_eq!(Placeholder::parse("view"), None);
    }

    #[test]
    fn schedule_is_decreasing_and_bounded() {
        let s = NoiseSchedule::linear(100, 0.005, 0.1);
        let a = s.as_slice();
        assert!((a[0] - 0.995).abs() < 1e-12);
        assert!(a.windows(2).all(|w| w[1] < w[0]));
        assert!(a[99] > 0.0);
        assert!(s.alpha_bar(0).is_err());
        assert!(s.alpha_bar(101).is_err());
    }
}
