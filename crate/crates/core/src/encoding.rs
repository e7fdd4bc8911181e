//! Random Fourier features over `[t, layer, pose...]`.
//!
//! The frequency matrix has `output_dim / 2` rows and one column per input
//! scalar. Column `j` is drawn from `N(0, sigma_j^2)` where `sigma_j` depends
//! on the role of input `j`: timestep, cross-attention layer, or pose
//! component. The encoding is `[sin(F v), cos(F v)]`.

use ndarray::{Array1, Array2};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of the frequency generator, stored in checkpoints.
///
/// ChaCha20 keyed with `seed` as 8 little-endian bytes followed by 24 zero
/// bytes; each normal is `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` with `u1, u2`
/// taken as the top 53 bits of consecutive `u64` outputs. Columns are filled
/// one at a time (column-major), so the leading `[t, layer]` columns are
/// shared between encoders built from the same seed.
pub const FREQUENCY_PRNG: &str = "chacha20-le64-boxmuller-colmajor/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputRole {
    Timestep,
    Layer,
    Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub output_dim: usize,
    pub sigma_pose: f64,
    pub sigma_timestep: f64,
    pub sigma_layer: f64,
    pub seed: u64,
    /// Divide `t` by this before encoding. `None` feeds the raw timestep.
    pub timestep_scale: Option<f64>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            output_dim: 64,
            sigma_pose: 0.5,
            sigma_timestep: 0.03,
            sigma_layer: 2.0,
            seed: 0,
            timestep_scale: None,
        }
    }
}

/// Gaussian stream used for frequency banks. See [`FREQUENCY_PRNG`].
pub struct FrequencyRng(ChaCha20Rng);

impl FrequencyRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self(ChaCha20Rng::from_seed(key))
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.unit();
        let u2 = self.unit();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierEncoder {
    frequencies: Array2<f64>,
    roles: Vec<InputRole>,
    config: EncoderConfig,
}

/// One encoder evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct ConditioningInput<'a> {
    pub timestep: u32,
    pub layer: u32,
    pub pose: &'a [f64],
}

impl FourierEncoder {
    pub fn new(config: EncoderConfig, roles: Vec<InputRole>) -> Result<Self> {
        if config.output_dim == 0 || !config.output_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "encoder output dim {} must be positive and even",
                config.output_dim
            )));
        }
        let rows = config.output_dim / 2;
        let mut rng = FrequencyRng::new(config.seed);
        let mut frequencies = Array2::zeros((rows, roles.len()));
        for (col, role) in roles.iter().enumerate() {
            let sigma = match role {
                InputRole::Timestep => config.sigma_timestep,
                InputRole::Layer => config.sigma_layer,
                InputRole::Pose => config.sigma_pose,
            };
            for row in 0..rows {
                frequencies[(row, col)] = sigma * rng.standard_normal();
            }
        }
        Ok(Self {
            frequencies,
            roles,
            config,
        })
    }

    /// Encoder over `[t, layer, pose]` with `pose_dim` pose components.
    pub fn view(config: EncoderConfig, pose_dim: usize) -> Result<Self> {
        let mut roles = vec![InputRole::Timestep, InputRole::Layer];
        roles.extend(std::iter::repeat_n(InputRole::Pose, pose_dim));
        Self::new(config, roles)
    }

    /// Encoder over `[t, layer]` only, for scene mappers.
    pub fn scene(config: EncoderConfig) -> Result<Self> {
        Self::new(config, vec![InputRole::Timestep, InputRole::Layer])
    }

    /// Rebuilds an encoder from stored frequencies (checkpoint load).
    pub fn from_parts(
        config: EncoderConfig,
        roles: Vec<InputRole>,
        frequencies: Array2<f64>,
    ) -> Result<Self> {
        if frequencies.dim() != (config.output_dim / 2, roles.len()) {
            return Err(Error::DimensionMismatch {
                expected: config.output_dim / 2 * roles.len(),
                got: frequencies.len(),
            });
        }
        Ok(Self {
            frequencies,
            roles,
            config,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn roles(&self) -> &[InputRole] {
        &self.roles
    }

    pub fn frequencies(&self) -> &Array2<f64> {
        &self.frequencies
    }

    pub fn input_dim(&self) -> usize {
        self.roles.len()
    }

    pub fn pose_dim(&self) -> usize {
        self.roles.iter().filter(|r| **r == InputRole::Pose).count()
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    /// The concatenated raw input vector `[t, layer, pose...]`.
    pub fn input_vector(&self, input: &ConditioningInput<'_>) -> Result<Array1<f64>> {
        let expected = self.input_dim();
        let got = 2 + input.pose.len();
        if got != expected {
            return Err(Error::DimensionMismatch { expected, got });
        }
        let t = match self.config.timestep_scale {
            Some(scale) => input.timestep as f64 / scale,
            None => input.timestep as f64,
        };
        let mut v = Vec::with_capacity(got);
        v.push(t);
        v.push(input.layer as f64);
        v.extend_from_slice(input.pose);
        Ok(Array1::from(v))
    }

    pub fn encode(&self, input: &ConditioningInput<'_>) -> Result<Array1<f64>> {
        let v = self.input_vector(input)?;
        Ok(self.encode_vector(&v))
    }

    /// `[sin(F v), cos(F v)]` for an already concatenated input vector.
    pub fn encode_vector(&self, v: &Array1<f64>) -> Array1<f64> {
        let proj = self.frequencies.dot(v);
        let m = proj.len();
        let mut out = Array1::zeros(2 * m);
        for (i, p) in proj.iter().enumerate() {
            let (s, c) = p.sin_cos();
            out[i] = s;
            out[m + i] = c;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism() {
        let a = FourierEncoder::view(EncoderConfig::default(), 12).unwrap();
        let b = FourierEncoder::view(EncoderConfig::default(), 12).unwrap();
        assert_eq!(a, b);
        let pose = [0.1; 12];
        let inp = ConditioningInput { timestep: 500, layer: 3, pose: &pose };
        assert_eq!(a.encode(&inp).unwrap(), b.encode(&inp).unwrap());
    }

    #[test]
    fn zero_input_gives_sin_zero_cos_one() {
        let enc = FourierEncoder::view(EncoderConfig::default(), 2).unwrap();
        let out = enc.encode_vector(&Array1::zeros(4));
        assert!(out.iter().take(32).all(|&s| s == 0.0));
        assert!(out.iter().skip(32).all(|&c| c == 1.0));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let enc = FourierEncoder::view(EncoderConfig::default(), 12).unwrap();
        let pose = [0.0; 2];
        let err = enc
            .encode(&ConditioningInput { timestep: 1, layer: 0, pose: &pose })
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 14, got: 4 }));
    }

    #[test]
    fn scene_variant_shape() {
        let enc = FourierEncoder::scene(EncoderConfig::default()).unwrap();
        assert_eq!(enc.input_dim(), 2);
        assert_eq!(enc.output_dim(), 64);
        assert_eq!(enc.frequencies().dim(), (32, 2));
    }

    #[test]
    fn bandwidths_follow_roles() {
        let cfg = EncoderConfig { output_dim: 4096, ..Default::default() };
        let enc = FourierEncoder::view(cfg, 1).unwrap();
        let std = |col: usize| {
            let c = enc.frequencies().column(col);
            (c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64).sqrt()
        };
        assert!((std(0) - 0.03).abs() < 0.003);
        assert!((std(1) - 2.0).abs() < 0.2);
        assert!((std(2) - 0.5).abs() < 0.05);
    }

    #[test]
    fn odd_output_dim_rejected() {
        let cfg = EncoderConfig { output_dim: 63, ..Default::default() };
        assert!(FourierEncoder::scene(cfg).is_err());
    }

    #[test]
    fn timestep_scale_switch() {
        let raw = FourierEncoder::scene(EncoderConfig::default()).unwrap();
        let scaled = FourierEncoder::scene(EncoderConfig { timestep_scale: Some(1000.0), ..Default::default() }).unwrap();
        let a = raw.input_vector(&ConditioningInput { timestep: 500, layer: 1, pose: &[] }).unwrap();
        let b = scaled.input_vector(&ConditioningInput { timestep: 500, layer: 1, pose: &[] }).unwrap();
        assert_eq!(a[0], 500.0);
        assert_eq!(b[0], 0.5);
    }
}
