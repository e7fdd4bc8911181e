//! Token mappers: a small MLP from the Fourier encoding to the backend's
//! word-embedding space, followed by L2-norm scaling to a reference word.
//!
//! Each block is `affine -> layer norm -> leaky relu`; a final affine head
//! emits the raw token. Scene mappers double the head width and split it into
//! the token and an output-bypass vector whose norm is fixed to `alpha`.
//!
//! All parameters live in one flat buffer described by a [`ParamLayout`], so
//! the optimizer, checkpoints, and gradient bookkeeping share one indexing.

use ndarray::{s, Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;
const MIN_DIRECTION_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapperRole {
    View,
    Scene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub blocks: usize,
    pub embed_dim: usize,
    pub bypass: bool,
    pub bypass_alpha: f64,
    pub reference_word: String,
    pub leaky_slope: f64,
}

impl MapperConfig {
    pub fn view(embed_dim: usize) -> Self {
        Self {
            input_dim: 64,
            hidden_dim: 64,
            blocks: 2,
            embed_dim,
            bypass: false,
            bypass_alpha: 0.2,
            reference_word: "object".into(),
            leaky_slope: 0.01,
        }
    }

    pub fn scene(embed_dim: usize) -> Self {
        Self {
            bypass: true,
            ..Self::view(embed_dim)
        }
    }

    pub fn head_width(&self) -> usize {
        if self.bypass {
            2 * self.embed_dim
        } else {
            self.embed_dim
        }
    }

    pub fn validate(&self, role: MapperRole) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.embed_dim == 0 || self.blocks == 0 {
            return Err(Error::MapperConfig("all dimensions must be positive".into()));
        }
        if role == MapperRole::View && self.bypass {
            return Err(Error::MapperConfig("view mappers have no output bypass".into()));
        }
        if role == MapperRole::Scene && !self.bypass {
            return Err(Error::MapperConfig("scene mappers require the output bypass".into()));
        }
        if self.bypass_alpha.is_nan() || self.bypass_alpha < 0.0 {
            return Err(Error::MapperConfig("bypass alpha must be non-negative".into()));
        }
        Ok(())
    }
}

/// Exact parameter count implied by the architecture.
pub fn parameter_count(config: &MapperConfig) -> usize {
    let mut count = 0;
    let mut fan_in = config.input_dim;
    for _ in 0..config.blocks {
        count += fan_in * config.hidden_dim + config.hidden_dim + 2 * config.hidden_dim;
        fan_in = config.hidden_dim;
    }
    count + fan_in * config.head_width() + config.head_width()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSlot>,
}

impl ParamLayout {
    fn for_config(config: &MapperConfig) -> Self {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let tensor = TensorSlot { name, shape, offset };
            offset += tensor.len();
            tensors.push(tensor);
        };
        let mut fan_in = config.input_dim;
        for b in 0..config.blocks {
            push(format!("blocks.{b}.linear.weight"), vec![config.hidden_dim, fan_in]);
            push(format!("blocks.{b}.linear.bias"), vec![config.hidden_dim]);
            push(format!("blocks.{b}.norm.gain"), vec![config.hidden_dim]);
            push(format!("blocks.{b}.norm.bias"), vec![config.hidden_dim]);
            fan_in = config.hidden_dim;
        }
        push("head.weight".into(), vec![config.head_width(), fan_in]);
        push("head.bias".into(), vec![config.head_width()]);
        Self { tensors }
    }

    pub fn total(&self) -> usize {
        self.tensors.last().map(|t| t.offset + t.len()).unwrap_or(0)
    }

    pub fn get(&self, name: &str) -> Option<&TensorSlot> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Output of a mapper after norm scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenPrediction {
    pub token: Array1<f64>,
    pub bypass: Option<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenMapper {
    config: MapperConfig,
    role: MapperRole,
    layout: ParamLayout,
    params: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array1<f64>>,
    normalized: Vec<Array1<f64>>,
    inv_std: Vec<f64>,
    pre_activation: Vec<Array1<f64>>,
    head_input: Array1<f64>,
    raw: Array1<f64>,
    ref_norm: f64,
}

/// Scales `v` to L2 norm `target`. Errors on a vanishing direction.
pub fn norm_scale(v: ArrayView1<'_, f64>, target: f64) -> Result<Array1<f64>> {
    let n = v.dot(&v).sqrt();
    if n.is_nan() || n < MIN_DIRECTION_NORM {
        return Err(Error::DegenerateToken { norm: n });
    }
    Ok(v.mapv(|x| x * target / n))
}

/// Vector-Jacobian product of [`norm_scale`] at `v`.
fn norm_scale_backward(v: ArrayView1<'_, f64>, target: f64, grad: &Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    let unit = v.mapv(|x| x / n);
    let along = unit.dot(grad);
    (grad - &(&unit * along)) * (target / n)
}

impl TokenMapper {
    pub fn init(config: MapperConfig, role: MapperRole, seed: u64) -> Result<Self> {
        config.validate(role)?;
        let layout = ParamLayout::for_config(&config);
        let mut params = vec![0.0; layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for tensor in &layout.tensors {
            let slot = &mut params[tensor.range()];
            if tensor.name.ends_with("norm.gain") {
                slot.fill(1.0);
            } else if tensor.name.ends_with("norm.bias") {
                slot.fill(0.0);
            } else {
                // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
                let fan_in = if tensor.name.ends_with("weight") {
                    tensor.shape[1]
                } else {
                    layout
                        .get(&tensor.name.replace("bias", "weight"))
                        .map(|w| w.shape[1])
                        .unwrap_or(1)
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                for p in slot.iter_mut() {
                    *p = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(Self {
            config,
            role,
            layout,
            params,
        })
    }

    pub fn from_params(config: MapperConfig, role: MapperRole, params: Vec<f64>) -> Result<Self> {
        config.validate(role)?;
        let layout = ParamLayout::for_config(&config);
        if params.len() != layout.total() {
            return Err(Error::DimensionMismatch {
                expected: layout.total(),
                got: params.len(),
            });
        }
        Ok(Self {
            config,
            role,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &MapperConfig {
        &self.config
    }

    pub fn role(&self) -> MapperRole {
        self.role
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|s| &self.params[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.get(name)?.range();
        Some(&mut self.params[range])
    }

    fn matrix(&self, name: &str) -> ArrayView2<'_, f64> {
        let tensor = self.layout.get(name).expect("layout tensor");
        ArrayView2::from_shape((tensor.shape[0], tensor.shape[1]), &self.params[tensor.range()])
            .expect("layout shape")
    }

    fn vector(&self, name: &str) -> ArrayView1<'_, f64> {
        let tensor = self.layout.get(name).expect("layout tensor");
        ArrayView1::from(&self.params[tensor.range()])
    }

    /// Raw head output before norm scaling.
    pub fn raw_forward(&self, input: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.forward_cached(input, 1.0)?.raw)
    }

    fn forward_cached(&self, input: ArrayView1<'_, f64>, ref_norm: f64) -> Result<ForwardCache> {
        if input.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: input.len(),
            });
        }
        let slope = self.config.leaky_slope;
        let mut x = input.to_owned();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.config.blocks),
            normalized: Vec::with_capacity(self.config.blocks),
            inv_std: Vec::with_capacity(self.config.blocks),
            pre_activation: Vec::with_capacity(self.config.blocks),
            head_input: Array1::zeros(0),
            raw: Array1::zeros(0),
            ref_norm,
        };
        for b in 0..self.config.blocks {
            let h = self.matrix(&format!("blocks.{b}.linear.weight")).dot(&x)
                + self.vector(&format!("blocks.{b}.linear.bias"));
            let n = h.len() as f64;
            let mean = h.sum() / n;
            let var = h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            let xhat = h.mapv(|v| (v - mean) * inv_std);
            let y = &xhat * &self.vector(&format!("blocks.{b}.norm.gain"))
                + self.vector(&format!("blocks.{b}.norm.bias"));
            let a = y.mapv(|v| if v > 0.0 { v } else { slope * v });
            cache.inputs.push(x);
            cache.normalized.push(xhat);
            cache.inv_std.push(inv_std);
            cache.pre_activation.push(y);
            x = a;
        }
        cache.raw = self.matrix("head.weight").dot(&x) + self.vector("head.bias");
        cache.head_input = x;
        Ok(cache)
    }

    fn scale_outputs(&self, cache: &ForwardCache) -> Result<TokenPrediction> {
        let d = self.config.embed_dim;
        let token = norm_scale(cache.raw.slice(s![..d]), cache.ref_norm)?;
        let bypass = if self.config.bypass {
            let half = cache.raw.slice(s![d..]);
            if self.config.bypass_alpha == 0.0 {
                Some(Array1::zeros(d))
            } else {
                Some(norm_scale(half, 1.0)? * self.config.bypass_alpha)
            }
        } else {
            None
        };
        Ok(TokenPrediction { token, bypass })
    }

    /// Forward pass keeping activations for [`TokenMapper::backward`].
    pub fn forward(
        &self,
        input: ArrayView1<'_, f64>,
        ref_norm: f64,
    ) -> Result<(TokenPrediction, ForwardCache)> {
        if ref_norm.is_nan() || ref_norm <= 0.0 {
            return Err(Error::MapperConfig(format!("reference norm {ref_norm} must be positive")));
        }
        let cache = self.forward_cached(input, ref_norm)?;
        let pred = self.scale_outputs(&cache)?;
        Ok((pred, cache))
    }

    pub fn predict(&self, input: ArrayView1<'_, f64>, ref_norm: f64) -> Result<TokenPrediction> {
        self.forward(input, ref_norm).map(|(p, _)| p)
    }

    /// Accumulates `d loss / d params` into `grads` given the loss gradient
    /// with respect to the scaled token (and bypass, for scene mappers).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_token: &Array1<f64>,
        grad_bypass: Option<&Array1<f64>>,
        grads: &mut [f64],
    ) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        let d = self.config.embed_dim;
        let mut grad_raw = Array1::zeros(self.config.head_width());
        grad_raw
            .slice_mut(s![..d])
            .assign(&norm_scale_backward(cache.raw.slice(s![..d]), cache.ref_norm, grad_token));
        if let (true, Some(gb)) = (self.config.bypass, grad_bypass) {
            if self.config.bypass_alpha != 0.0 {
                grad_raw.slice_mut(s![d..]).assign(&norm_scale_backward(
                    cache.raw.slice(s![d..]),
                    self.config.bypass_alpha,
                    gb,
                ));
            }
        }

        let mut grad_x = self.affine_backward("head", &cache.head_input, &grad_raw, grads);
        let slope = self.config.leaky_slope;
        for b in (0..self.config.blocks).rev() {
            let y = &cache.pre_activation[b];
            let grad_y = &grad_x * &y.mapv(|v| if v > 0.0 { 1.0 } else { slope });
            let xhat = &cache.normalized[b];
            let gain = self.vector(&format!("blocks.{b}.norm.gain"));
            let gain_spec = self.layout.get(&format!("blocks.{b}.norm.gain")).unwrap().range();
            let beta_spec = self.layout.get(&format!("blocks.{b}.norm.bias")).unwrap().range();
            for (i, (gy, xh)) in grad_y.iter().zip(xhat.iter()).enumerate() {
                grads[gain_spec.start + i] += gy * xh;
                grads[beta_spec.start + i] += gy;
            }
            let grad_xhat = &grad_y * &gain;
            let n = grad_xhat.len() as f64;
            let mean_g = grad_xhat.sum() / n;
            let mean_gx = grad_xhat.dot(xhat) / n;
            let grad_h = (&grad_xhat - mean_g - &(xhat * mean_gx)) * cache.inv_std[b];
            grad_x = self.affine_backward(&format!("blocks.{b}.linear"), &cache.inputs[b], &grad_h, grads);
        }
    }

    fn affine_backward(
        &self,
        prefix: &str,
        input: &Array1<f64>,
        grad_out: &Array1<f64>,
        grads: &mut [f64],
    ) -> Array1<f64> {
        let w_spec = self.layout.get(&format!("{prefix}.weight")).unwrap();
        let b_spec = self.layout.get(&format!("{prefix}.bias")).unwrap();
        let cols = w_spec.shape[1];
        for (r, g) in grad_out.iter().enumerate() {
            grads[b_spec.offset + r] += g;
            if *g != 0.0 {
                let row = &mut grads[w_spec.offset + r * cols..w_spec.offset + (r + 1) * cols];
                for (slot, x) in row.iter_mut().zip(input.iter()) {
                    *slot += g * x;
                }
            }
        }
        self.matrix(&format!("{prefix}.weight")).t().dot(grad_out)
    }
}

pub fn init_mapper(config: MapperConfig, role: MapperRole, seed: u64) -> Result<TokenMapper> {
    TokenMapper::init(config, role, seed)
}

pub fn predict_view_token(
    mapper: &TokenMapper,
    enc_out: ArrayView1<'_, f64>,
    ref_norm: f64,
) -> Result<TokenPrediction> {
    if mapper.role() != MapperRole::View {
        return Err(Error::MapperConfig("expected a view mapper".into()));
    }
    mapper.predict(enc_out, ref_norm)
}

pub fn predict_scene_token(
    mapper: &TokenMapper,
    enc_out: ArrayView1<'_, f64>,
    ref_norm: f64,
) -> Result<TokenPrediction> {
    if mapper.role() != MapperRole::Scene {
        return Err(Error::MapperConfig("expected a scene mapper".into()));
    }
    mapper.predict(enc_out, ref_norm)
}
