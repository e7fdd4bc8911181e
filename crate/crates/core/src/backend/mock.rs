//! Deterministic, differentiable stand-in for a frozen latent-diffusion model.
//!
//! The text encoder is linear: column `j` of the encoding is `A e_j + pos_j`,
//! plus any injection at `j`. The clean-latent estimate pools a fixed
//! readout of the encoding,
//!
//! ```text
//! x_hat = b0 + (1/L) sum_l W meanpool(P c_l)
//! eps_hat = (z_t - sqrt(abar) x_hat) / sqrt(1 - abar)
//! ```
//!
//! so `eps_hat` is a base predictor of `z_t` plus a conditioning term, and
//! the loss has a closed-form gradient with respect to every column of `c`.
//! Vocabulary embeddings live in a subspace that `P` annihilates; only
//! directions written by overrides and injections reach the readout.

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{
    BackendDescriptor, DiffusionBackend, LayerGradients, LossOutput, LossSample, NoiseSchedule,
    Placeholder, Token,
};
use crate::conditioning::{ConditioningRequest, LayerConditioning, TokenizedPrompt, PAD_LENGTH};
use crate::error::{Error, Result};
use crate::image::Image;

/// Words the mock tokenizer knows. Covers the bundled templates, the
/// reference word, and a few class words.
const VOCABULARY: &[&str] = &[
    "object", ".", ",", "a", "an", "the", "of", "my", "one", "photo", "rendering", "rendition",
    "cropped", "clean", "dirty", "dark", "bright", "cool", "close-up", "good", "nice", "small",
    "large", "weird", "statue", "teddy", "bear", "brown", "white", "red", "toy", "house", "scene",
    "figure", "bust", "skull", "fruit", "can", "bottle", "building", "view", "from", "above",
    "left", "right", "front", "back", "and", "with", "on", "in",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub seed: u64,
    pub embed_dim: usize,
    pub layer_count: u32,
    pub timesteps: u32,
    /// Latent is `side x side x 1`; decoded images are `side x side x 3`.
    pub side: usize,
    /// Rank of the conditioning readout.
    pub readout_rank: usize,
    pub gain: f64,
    /// Constant clean-latent estimate without conditioning.
    pub base_level: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sampling_steps: u32,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            embed_dim: 32,
            layer_count: 2,
            timesteps: 100,
            side: 16,
            readout_rank: 12,
            gain: 12.0,
            base_level: -1.0,
            beta_start: 0.005,
            beta_end: 0.1,
            sampling_steps: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    config: MockConfig,
    descriptor: BackendDescriptor,
    schedule: NoiseSchedule,
    /// Text encoder, `d x d`.
    encoder: Array2<f64>,
    /// Positional offsets, `d x 77`.
    positions: Array2<f64>,
    /// Readout projection, `d x d`.
    pool: Array2<f64>,
    /// Conditioning-to-latent map, `N x d`.
    readout: Array2<f64>,
    /// One row per vocabulary word.
    vocab: Array2<f64>,
    /// Bos, Eos, Pad.
    specials: Array2<f64>,
    /// Embedding for a placeholder left without an override.
    placeholder: Array1<f64>,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Gram-Schmidt on the columns of a Gaussian matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut m = gaussian_matrix(rng, n, n);
    for j in 0..n {
        for k in 0..j {
            let proj = m.column(j).dot(&m.column(k));
            let ck = m.column(k).to_owned();
            m.column_mut(j).scaled_add(-proj, &ck);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        m.column_mut(j).mapv_inplace(|v| v / norm);
    }
    m
}

/// Orthonormal 2-D cosine basis images, lowest frequencies first.
fn cosine_basis(side: usize, count: usize) -> Array2<f64> {
    let mut freqs: Vec<(usize, usize)> =
        (0..side).flat_map(|u| (0..side).map(move |v| (u, v))).collect();
    freqs.sort_by_key(|&(u, v)| (u + v, u));
    let mut basis = Array2::zeros((side * side, count));
    for (k, &(u, v)) in freqs.iter().take(count).enumerate() {
        let wave = |f: usize, i: usize| {
            (std::f64::consts::PI * f as f64 * (i as f64 + 0.5) / side as f64).cos()
        };
        for y in 0..side {
            for x in 0..side {
                basis[[y * side + x, k]] = wave(v, y) * wave(u, x);
            }
        }
        let norm = basis.column(k).dot(&basis.column(k)).sqrt();
        basis.column_mut(k).mapv_inplace(|b| b / norm);
    }
    basis
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self::with_config(MockConfig {
            seed,
            ..MockConfig::default()
        })
        .expect("default mock config is valid")
    }

    pub fn with_config(config: MockConfig) -> Result<Self> {
        let d = config.embed_dim;
        let k = config.readout_rank;
        let n = config.side * config.side;
        if k == 0 || k >= d || k > n {
            return Err(Error::Backend(format!(
                "readout rank {k} must lie in [1, {}) and not exceed {n}",
                d
            )));
        }
        if !(0.0..1.0).contains(&config.beta_start) || !(0.0..1.0).contains(&config.beta_end) {
            return Err(Error::Backend("betas must lie in [0, 1)".into()));
        }
        let descriptor = BackendDescriptor {
            name: "mock-linear".into(),
            embed_dim: d,
            layer_count: config.layer_count,
            timesteps: config.timesteps,
            latent_shape: (config.side, config.side, 1),
            image_shape: (config.side, config.side, 3),
            frozen: true,
        };
        descriptor.validate()?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let frame = random_orthogonal(&mut rng, d);
        let readout_frame = frame.slice(s![.., ..k]).to_owned();
        let word_frame = frame.slice(s![.., k..]).to_owned();
        let w = d - k;

        let mut inner = Array2::zeros((d, d));
        inner.slice_mut(s![..k, ..k]).assign(&random_orthogonal(&mut rng, k));
        inner.slice_mut(s![k.., k..]).assign(&random_orthogonal(&mut rng, w));
        let encoder = frame.dot(&inner).dot(&frame.t());
        let pool = readout_frame.dot(&readout_frame.t());
        let basis = cosine_basis(config.side, k);
        let readout = basis.dot(&readout_frame.t()) * (PAD_LENGTH as f64 * config.gain);

        // Unit word-subspace directions, rescaled below.
        let mut word_vectors = |count: usize| {
            let coords = gaussian_matrix(&mut rng, count, w);
            let mut out = coords.dot(&word_frame.t());
            for mut row in out.rows_mut() {
                let norm = row.dot(&row).sqrt();
                row.mapv_inplace(|v| v / norm);
            }
            out
        };
        let mut vocab = word_vectors(VOCABULARY.len());
        use rand::Rng;
        let scales: Vec<f64> = (0..VOCABULARY.len()).map(|_| rng.random_range(0.8..1.2)).collect();
        for (i, mut row) in vocab.rows_mut().into_iter().enumerate() {
            // The reference word keeps unit norm.
            if i != 0 {
                row *= scales[i];
            }
        }
        let mut word_vectors = |count: usize| {
            let coords = gaussian_matrix(&mut rng, count, w);
            coords.dot(&word_frame.t()) / (w as f64).sqrt()
        };
        let specials = word_vectors(3);
        let placeholder = word_vectors(1).row(0).to_owned();
        let positions = word_vectors(PAD_LENGTH).t().to_owned() * 0.1;

        Ok(Self {
            schedule: NoiseSchedule::linear(config.timesteps, config.beta_start, config.beta_end),
            config,
            descriptor,
            encoder,
            positions,
            pool,
            readout,
            vocab,
            specials,
            placeholder,
        })
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    pub fn vocabulary() -> &'static [&'static str] {
        VOCABULARY
    }

    fn token_embedding(&self, token: &Token) -> Array1<f64> {
        match token {
            Token::Bos => self.specials.row(0).to_owned(),
            Token::Eos => self.specials.row(1).to_owned(),
            Token::Pad => self.specials.row(2).to_owned(),
            Token::Word(id) => self.vocab.row(*id as usize).to_owned(),
            Token::Placeholder(_) => self.placeholder.clone(),
        }
    }

    fn check_prompt(&self, prompt: &TokenizedPrompt, layer: &LayerConditioning) -> Result<()> {
        if prompt.tokens.len() != PAD_LENGTH {
            return Err(Error::DimensionMismatch {
                expected: PAD_LENGTH,
                got: prompt.tokens.len(),
            });
        }
        let d = self.descriptor.embed_dim;
        for (pos, v) in layer.overrides.iter().chain(&layer.injections) {
            if *pos >= prompt.length {
                return Err(Error::Backend(format!(
                    "conditioning position {pos} outside prompt of length {}",
                    prompt.length
                )));
            }
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    /// `meanpool(P c)` for one layer, using linearity of the encoder.
    fn pooled(&self, prompt: &TokenizedPrompt, layer: &LayerConditioning) -> Result<Array1<f64>> {
        let c = self.encode_layer(prompt, layer)?;
        let mean = c.mean_axis(Axis(1)).expect("77 columns");
        Ok(self.pool.dot(&mean))
    }

    /// Clean-latent estimate from one conditioning per layer. Independent
    /// of `z_t` and `t`.
    pub fn predict_clean(
        &self,
        prompt: &TokenizedPrompt,
        layers: &[LayerConditioning],
    ) -> Result<Array1<f64>> {
        if layers.len() != self.descriptor.layer_count as usize {
            return Err(Error::DimensionMismatch {
                expected: self.descriptor.layer_count as usize,
                got: layers.len(),
            });
        }
        let mut acc = Array1::zeros(self.descriptor.embed_dim);
        for layer in layers {
            acc += &self.pooled(prompt, layer)?;
        }
        acc /= layers.len() as f64;
        Ok(self.readout.dot(&acc) + self.config.base_level)
    }

    fn epsilon(&self, z_t: &Array1<f64>, x_hat: &Array1<f64>, abar: f64) -> Array1<f64> {
        (z_t - &(x_hat * abar.sqrt())) / (1.0 - abar).sqrt()
    }

    fn check_latent(&self, v: &Array1<f64>) -> Result<()> {
        if v.len() != self.descriptor.latent_len() {
            return Err(Error::DimensionMismatch {
                expected: self.descriptor.latent_len(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

fn hash_bytes(hasher: &mut Sha256, label: &str, values: impl Iterator<Item = f64>) {
    hasher.update(label.as_bytes());
    for v in values {
        hasher.update(v.to_le_bytes());
    }
}

impl DiffusionBackend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            let core = chunk.trim_end_matches(['.', ',']);
            let tail = &chunk[core.len()..];
            if !core.is_empty() {
                if let Some(p) = Placeholder::parse(core) {
                    out.push(Token::Placeholder(p));
                } else {
                    let lower = core.to_lowercase();
                    let id = VOCABULARY
                        .iter()
                        .position(|w| *w == lower)
                        .ok_or_else(|| Error::UnknownWord(core.to_string()))?;
                    out.push(Token::Word(id as u32));
                }
            }
            for ch in tail.chars() {
                let id = VOCABULARY
                    .iter()
                    .position(|w| w.len() == 1 && w.starts_with(ch))
                    .expect("punctuation in vocabulary");
                out.push(Token::Word(id as u32));
            }
        }
        Ok(out)
    }

    fn word_embedding(&self, word: &str) -> Result<Array1<f64>> {
        let tokens = self.tokenize(word)?;
        match tokens.first() {
            Some(Token::Word(id)) => Ok(self.vocab.row(*id as usize).to_owned()),
            _ => Err(Error::UnknownWord(word.to_string())),
        }
    }

    fn encode_layer(&self, prompt: &TokenizedPrompt, layer: &LayerConditioning) -> Result<Array2<f64>> {
        self.check_prompt(prompt, layer)?;
        let d = self.descriptor.embed_dim;
        let mut embeddings = Array2::zeros((d, PAD_LENGTH));
        for (j, token) in prompt.tokens.iter().enumerate() {
            embeddings.column_mut(j).assign(&self.token_embedding(token));
        }
        for (pos, v) in &layer.overrides {
            embeddings.column_mut(*pos).assign(v);
        }
        let mut c = self.encoder.dot(&embeddings) + &self.positions;
        for (pos, v) in &layer.injections {
            let mut col = c.column_mut(*pos);
            col += v;
        }
        Ok(c)
    }

    fn denoise_loss(
        &self,
        sample: &LossSample,
        prompt: &TokenizedPrompt,
        layers: &[LayerConditioning],
    ) -> Result<LossOutput> {
        self.check_latent(&sample.latent)?;
        self.check_latent(&sample.noise)?;
        let abar = self.schedule.alpha_bar(sample.timestep)?;
        let z_t = self.schedule.add_noise(&sample.latent, &sample.noise, sample.timestep)?;
        let x_hat = self.predict_clean(prompt, layers)?;
        let residual = &sample.noise - &self.epsilon(&z_t, &x_hat, abar);
        let n = residual.len() as f64;
        let loss = residual.dot(&residual) / n;

        // d loss / d eps_hat = -2 r / N; d eps_hat / d x_hat = -sqrt(abar / (1 - abar)).
        let grad_x_hat = &residual * (2.0 / n * (abar / (1.0 - abar)).sqrt());
        let grad_pooled = self.readout.t().dot(&grad_x_hat) / layers.len() as f64;
        let grad_column = self.pool.t().dot(&grad_pooled) / PAD_LENGTH as f64;
        let grad_embedding = self.encoder.t().dot(&grad_column);

        let layers = layers
            .iter()
            .map(|l| LayerGradients {
                overrides: l.overrides.iter().map(|(p, _)| (*p, grad_embedding.clone())).collect(),
                injections: l.injections.iter().map(|(p, _)| (*p, grad_column.clone())).collect(),
            })
            .collect();
        Ok(LossOutput { loss, layers })
    }

    /// Deterministic DDIM over `steps` timesteps spaced evenly from `T` to 1;
    /// returns the decoded clean estimate of the final step.
    fn sample_image(&self, request: &ConditioningRequest<'_>, steps: u32, seed: u64) -> Result<Image> {
        let t_max = self.descriptor.timesteps;
        let schedule: Vec<u32> = if steps <= 1 {
            vec![1]
        } else {
            (0..steps)
                .map(|i| {
                    let f = i as f64 / (steps - 1) as f64;
                    (t_max as f64 - f * (t_max - 1) as f64).round() as u32
                })
                .collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z: Array1<f64> =
            Array1::from_shape_simple_fn(self.descriptor.latent_len(), || StandardNormal.sample(&mut rng));
        let mut x_hat = Array1::zeros(z.len());
        for (i, &t) in schedule.iter().enumerate() {
            let layers = (0..self.descriptor.layer_count)
                .map(|l| request.resolve(t, l))
                .collect::<Result<Vec<_>>>()?;
            x_hat = self.predict_clean(&request.prompt, &layers)?;
            let abar = self.schedule.alpha_bar(t)?;
            let eps = self.epsilon(&z, &x_hat, abar);
            if let Some(&next) = schedule.get(i + 1) {
                let a_next = self.schedule.alpha_bar(next)?;
                z = &x_hat * a_next.sqrt() + &eps * (1.0 - a_next).sqrt();
            }
        }
        self.decode_latent(&x_hat)
    }

    /// `2 luma - 1`, after resizing to the latent grid if needed.
    fn encode_image(&self, image: &Image) -> Result<Array1<f64>> {
        let side = self.config.side;
        let img = if image.height() == side && image.width() == side {
            image.clone()
        } else {
            image.resize(side, side)
        };
        Ok(Array1::from_iter(img.luma().into_iter().map(|v| 2.0 * v - 1.0)))
    }

    fn decode_latent(&self, latent: &Array1<f64>) -> Result<Image> {
        self.check_latent(latent)?;
        let side = self.config.side;
        let gray: Vec<f64> = latent.iter().map(|z| ((z + 1.0) / 2.0).clamp(0.0, 1.0)).collect();
        Image::from_gray(side, side, 3, &gray)
    }

    fn default_sampling_steps(&self) -> u32 {
        self.config.sampling_steps
    }

    fn weights_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.descriptor.digest().as_bytes());
        hash_bytes(&mut h, "encoder", self.encoder.iter().copied());
        hash_bytes(&mut h, "positions", self.positions.iter().copied());
        hash_bytes(&mut h, "pool", self.pool.iter().copied());
        hash_bytes(&mut h, "readout", self.readout.iter().copied());
        hash_bytes(&mut h, "vocab", self.vocab.iter().copied());
        hash_bytes(&mut h, "specials", self.specials.iter().copied());
        hash_bytes(&mut h, "placeholder", self.placeholder.iter().copied());
        hash_bytes(&mut h, "base", std::iter::once(self.config.base_level));
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{build_prompt, PromptTemplate, SceneSlot};

    fn prompt(b: &MockBackend) -> TokenizedPrompt {
        build_prompt(b, &PromptTemplate::default_viewed(), &SceneSlot::Token("s".into())).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        Array1::from_shape_simple_fn(n, || StandardNormal.sample(rng))
    }

    #[test]
    fn encoder_frame_is_orthogonal() {
        let b = MockBackend::new(3);
        let eye = b.encoder.t().dot(&b.encoder);
        for ((i, j), v) in eye.indexed_iter() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        let pp = b.pool.dot(&b.pool);
        assert!((&pp - &b.pool).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn vocabulary_is_invisible_to_readout() {
        let b = MockBackend::new(1);
        for row in b.vocab.rows() {
            assert!(b.pool.dot(&b.encoder.dot(&row)).iter().all(|v| v.abs() < 1e-12));
        }
        let p = prompt(&b);
        let layers = vec![LayerConditioning::default(); 2];
        let x = b.predict_clean(&p, &layers).unwrap();
        assert!(x.iter().all(|v| (v + 1.0).abs() < 1e-12));
    }

    #[test]
    fn reference_word_has_unit_norm() {
        let b = MockBackend::new(5);
        let n = crate::backend::reference_norm(&b, "object").unwrap();
        assert!((n - 1.0).abs() < 1e-12);
        for w in VOCABULARY {
            let e = b.word_embedding(w).unwrap();
            let direct: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(direct > 0.0);
            assert!((crate::backend::reference_norm(&b, w).unwrap() - direct).abs() < 1e-12);
        }
        assert!(matches!(b.word_embedding("zebra"), Err(Error::UnknownWord(_))));
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        let b = MockBackend::new(0);
        let t = b.tokenize("<view>. a photo, of").unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t[0], Token::Placeholder(Placeholder::View));
        assert_eq!(t[1], Token::Word(1));
        assert_eq!(t[4], Token::Word(2));
    }

    #[test]
    fn injection_law_is_exact() {
        let b = MockBackend::new(2);
        let p = prompt(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pos = p.scene_position.unwrap();
        let inj = random_vec(&mut rng, 32);
        let base = b.encode_layer(&p, &LayerConditioning::default()).unwrap();
        let with = b
            .encode_layer(&p, &LayerConditioning { overrides: vec![], injections: vec![(pos, inj.clone())] })
            .unwrap();
        for j in 0..PAD_LENGTH {
            let diff = &with.column(j) - &base.column(j);
            let want = if j == pos { inj.clone() } else { Array1::zeros(32) };
            assert!((&diff - &want).iter().all(|v| v.abs() < 1e-12));
        }
        let ov = b
            .encode_layer(&p, &LayerConditioning { overrides: vec![(pos, inj)], injections: vec![] })
            .unwrap();
        for j in (0..PAD_LENGTH).filter(|&j| j != pos) {
            assert_eq!(ov.column(j), base.column(j));
        }
    }

    #[test]
    fn severed_readout_predicts_noise_exactly() {
        let b = MockBackend::with_config(MockConfig { gain: 0.0, ..MockConfig::default() }).unwrap();
        let p = prompt(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sample = LossSample {
            latent: Array1::from_elem(256, -1.0),
            noise: random_vec(&mut rng, 256),
            timestep: 37,
        };
        let layers = vec![
            LayerConditioning { overrides: vec![(1, random_vec(&mut rng, 32))], injections: vec![] };
            2
        ];
        let out = b.denoise_loss(&sample, &p, &layers).unwrap();
        assert!(out.loss < 1e-24);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let b = MockBackend::new(6);
        let p = prompt(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sample = LossSample {
            latent: random_vec(&mut rng, 256) * 0.5,
            noise: random_vec(&mut rng, 256),
            timestep: 20,
        };
        let layers: Vec<LayerConditioning> = (0..2)
            .map(|_| LayerConditioning {
                overrides: vec![(1, random_vec(&mut rng, 32) * 0.2)],
                injections: vec![(7, random_vec(&mut rng, 32) * 0.2)],
            })
            .collect();
        let out = b.denoise_loss(&sample, &p, &layers).unwrap();
        let h = 1e-6;
        for l in 0..2 {
            for i in [0, 5, 31] {
                for which in 0..2 {
                    let mut plus = layers.clone();
                    let mut minus = layers.clone();
                    let (pv, mv, g) = if which == 0 {
                        (&mut plus[l].overrides[0].1, &mut minus[l].overrides[0].1, &out.layers[l].overrides[0].1)
                    } else {
                        (&mut plus[l].injections[0].1, &mut minus[l].injections[0].1, &out.layers[l].injections[0].1)
                    };
                    pv[i] += h;
                    mv[i] -= h;
                    let fp = b.denoise_loss(&sample, &p, &plus).unwrap().loss;
                    let fm = b.denoise_loss(&sample, &p, &minus).unwrap().loss;
                    let fd = (fp - fm) / (2.0 * h);
                    assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-6), "{fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn timestep_bounds() {
        let b = MockBackend::new(0);
        let p = prompt(&b);
        for t in [0, 101] {
            let s = LossSample { latent: Array1::zeros(256), noise: Array1::zeros(256), timestep: t };
            assert!(matches!(
                b.denoise_loss(&s, &p, &[LayerConditioning::default(), LayerConditioning::default()]),
                Err(Error::TimestepOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn sampling_is_deterministic_and_conditioned() {
        let b = MockBackend::new(0);
        let p = prompt(&b);
        let plain = ConditioningRequest::plain(p.clone());
        let a = b.sample_image(&plain, 5, 11).unwrap();
        assert_eq!(a, b.sample_image(&plain, 5, 11).unwrap());
        assert_eq!(a.shape(), (16, 16, 3));
    }

    #[test]
    fn latent_round_trip_for_gray_images() {
        let b = MockBackend::new(0);
        let img = Image::from_fn(16, 16, 3, |y, x, _| (y * 16 + x) as f64 / 255.0);
        let back = b.decode_latent(&b.encode_image(&img).unwrap()).unwrap();
        for (u, v) in img.data().iter().zip(back.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn digest_depends_on_seed_only_through_weights() {
        assert_eq!(MockBackend::new(1).weights_digest(), MockBackend::new(1).weights_digest());
        assert_ne!(MockBackend::new(1).weights_digest(), MockBackend::new(2).weights_digest());
    }
}
