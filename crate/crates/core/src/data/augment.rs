//! Training-time image augmentation.
//!
//! The pipeline runs, in order: rotation, resized crop (always), color
//! jitter, blur. There is deliberately no flip stage.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationConfig {
    pub max_degrees: f64,
    /// Value for pixels rotated in from outside the image.
    pub fill: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropConfig {
    /// Area fraction range.
    pub scale: (f64, f64),
    /// Aspect-ratio range `w / h`.
    pub ratio: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurConfig {
    pub kernel: usize,
    pub sigma: (f64, f64),
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub rotation: RotationConfig,
    pub crop: CropConfig,
    pub jitter: JitterConfig,
    pub blur: BlurConfig,
    /// `(H, W)` of every output.
    pub output: (usize, usize),
}

pub const SINGLE_VIEW_CROP_SCALE: (f64, f64) = (0.70, 1.30);
pub const MULTI_VIEW_CROP_SCALE: (f64, f64) = (0.95, 1.05);

impl AugmentationConfig {
    fn with_scale(scale: (f64, f64), output: (usize, usize)) -> Self {
        Self {
            rotation: RotationConfig {
                max_degrees: 10.0,
                fill: 1.0,
                probability: 0.75,
            },
            crop: CropConfig {
                scale,
                ratio: (3.0 / 4.0, 4.0 / 3.0),
            },
            jitter: JitterConfig {
                brightness: 0.04,
                contrast: 0.04,
                saturation: 0.04,
                hue: 0.04,
                probability: 0.75,
            },
            blur: BlurConfig {
                kernel: 5,
                sigma: (0.1, 2.0),
                probability: 0.2,
            },
            output,
        }
    }

    pub fn single_view(output: (usize, usize)) -> Self {
        Self::with_scale(SINGLE_VIEW_CROP_SCALE, output)
    }

    pub fn multi_view(output: (usize, usize)) -> Self {
        Self::with_scale(MULTI_VIEW_CROP_SCALE, output)
    }

    /// Single-view crop range for one training view, narrow range otherwise.
    pub fn for_view_count(views: usize, output: (usize, usize)) -> Self {
        if views <= 1 {
            Self::single_view(output)
        } else {
            Self::multi_view(output)
        }
    }

    /// Resize only.
    pub fn identity(output: (usize, usize)) -> Self {
        let mut c = Self::with_scale((1.0, 1.0), output);
        c.rotation.probability = 0.0;
        c.jitter.probability = 0.0;
        c.blur.probability = 0.0;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTrace {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    /// Area fraction drawn for the accepted attempt, `None` on fallback.
    pub sampled_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterTrace {
    /// Application order over (brightness, contrast, saturation, hue).
    pub order: [usize; 4],
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

/// Which stages fired and with what parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentTrace {
    pub rotation_degrees: Option<f64>,
    pub crop: CropTrace,
    pub jitter: Option<JitterTrace>,
    pub blur_sigma: Option<f64>,
}

pub fn augment<R: Rng + ?Sized>(image: &Image, config: &AugmentationConfig, rng: &mut R) -> Image {
    augment_with_trace(image, config, rng).0
}

pub fn augment_with_trace<R: Rng + ?Sized>(
    image: &Image,
    config: &AugmentationConfig,
    rng: &mut R,
) -> (Image, AugmentTrace) {
    let mut img = image.clone();

    let rotation_degrees = if rng.random::<f64>() < config.rotation.probability {
        let m = config.rotation.max_degrees;
        let angle = rng.random_range(-m..=m);
        img = rotate(&img, angle, config.rotation.fill);
        Some(angle)
    } else {
        None
    };

    let crop = sample_crop(img.height(), img.width(), &config.crop, rng);
    let (out_h, out_w) = config.output;
    img = img.resized_crop(
        crop.top as f64,
        crop.left as f64,
        crop.height as f64,
        crop.width as f64,
        out_h,
        out_w,
    );

    let jitter = if rng.random::<f64>() < config.jitter.probability {
        let j = sample_jitter(&config.jitter, rng);
        img = apply_jitter(&img, &j);
        Some(j)
    } else {
        None
    };

    let blur_sigma = if rng.random::<f64>() < config.blur.probability {
        let sigma = rng.random_range(config.blur.sigma.0..=config.blur.sigma.1);
        img = gaussian_blur(&img, config.blur.kernel, sigma);
        Some(sigma)
    } else {
        None
    };

    img.clamp_unit();
    (
        img,
        AugmentTrace {
            rotation_degrees,
            crop,
            jitter,
            blur_sigma,
        },
    )
}

/// Counter-clockwise rotation about the image center, nearest-neighbour,
/// same output size.
pub fn rotate(image: &Image, degrees: f64, fill: f64) -> Image {
    let (h, w, ch) = image.shape();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = h as f64 / 2.0;
    let cx = w as f64 / 2.0;
    Image::from_fn(h, w, ch, |y, x, c| {
        let dx = x as f64 + 0.5 - cx;
        let dy = y as f64 + 0.5 - cy;
        let sx = cos * dx - sin * dy + cx;
        let sy = sin * dx + cos * dy + cy;
        if sx < 0.0 || sy < 0.0 || sx >= w as f64 || sy >= h as f64 {
            fill
        } else {
            image.get(sy.floor() as usize, sx.floor() as usize, c)
        }
    })
}

/// Random area and aspect with up to 10 attempts, then a center crop at the
/// closest admissible aspect ratio.
pub fn sample_crop<R: Rng + ?Sized>(height: usize, width: usize, config: &CropConfig, rng: &mut R) -> CropTrace {
    let area = (height * width) as f64;
    let (log_lo, log_hi) = (config.ratio.0.ln(), config.ratio.1.ln());
    for _ in 0..10 {
        let scale = if config.scale.0 == config.scale.1 {
            config.scale.0
        } else {
            rng.random_range(config.scale.0..config.scale.1)
        };
        let aspect = if log_lo == log_hi {
            config.ratio.0
        } else {
            rng.random_range(log_lo..log_hi).exp()
        };
        let target = area * scale;
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= width && h <= height {
            let top = rng.random_range(0..=height - h);
            let left = rng.random_range(0..=width - w);
            return CropTrace {
                top,
                left,
                height: h,
                width: w,
                sampled_scale: Some(scale),
            };
        }
    }
    let in_ratio = width as f64 / height as f64;
    let (h, w) = if in_ratio < config.ratio.0 {
        let w = width;
        (((w as f64) / config.ratio.0).round() as usize, w)
    } else if in_ratio > config.ratio.1 {
        let h = height;
        (h, ((h as f64) * config.ratio.1).round() as usize)
    } else {
        (height, width)
    };
    CropTrace {
        top: (height - h) / 2,
        left: (width - w) / 2,
        height: h,
        width: w,
        sampled_scale: None,
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, strength: f64, centre: f64) -> f64 {
    if strength == 0.0 {
        centre
    } else {
        rng.random_range(centre - strength..=centre + strength)
    }
}

pub fn sample_jitter<R: Rng + ?Sized>(config: &JitterConfig, rng: &mut R) -> JitterTrace {
    let mut order = [0, 1, 2, 3];
    order.shuffle(rng);
    JitterTrace {
        order,
        brightness: symmetric(rng, config.brightness, 1.0),
        contrast: symmetric(rng, config.contrast, 1.0),
        saturation: symmetric(rng, config.saturation, 1.0),
        hue: symmetric(rng, config.hue, 0.0),
    }
}

fn gray_of(px: &[f64]) -> f64 {
    if px.len() >= 3 {
        0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
    } else {
        px[0]
    }
}

pub fn apply_jitter(image: &Image, j: &JitterTrace) -> Image {
    let mut img = image.clone();
    let ch = img.channels();
    for op in j.order {
        match op {
            0 => blend_with(&mut img, j.brightness, |_, _| 0.0),
            1 => {
                let mean = img.luma().iter().sum::<f64>() / (img.height() * img.width()) as f64;
                blend_with(&mut img, j.contrast, |_, _| mean);
            }
            2 if ch >= 3 => {
                let gray: Vec<f64> = img.data().chunks(ch).map(gray_of).collect();
                blend_with(&mut img, j.saturation, |i, _| gray[i]);
            }
            3 if ch >= 3 => shift_hue(&mut img, j.hue),
            _ => {}
        }
    }
    img
}

/// `clamp(f * x + (1 - f) * other)` per pixel-channel, `other(pixel, channel)`.
fn blend_with(img: &mut Image, factor: f64, other: impl Fn(usize, usize) -> f64) {
    let ch = img.channels();
    for (k, v) in img.data_mut().iter_mut().enumerate() {
        let o = other(k / ch, k % ch);
        *v = (factor * *v + (1.0 - factor) * o).clamp(0.0, 1.0);
    }
}

fn shift_hue(img: &mut Image, shift: f64) {
    let ch = img.channels();
    for px in img.data_mut().chunks_mut(ch) {
        let (h, s, v) = rgb_to_hsv(px[0], px[1], px[2]);
        let (r, g, b) = hsv_to_rgb((h + shift).rem_euclid(1.0), s, v);
        px[0] = r;
        px[1] = g;
        px[2] = b;
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match (i as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(image: &Image, kernel: usize, sigma: f64) -> Image {
    let half = (kernel / 2) as isize;
    let weights: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let (h, w, ch) = image.shape();
    let horizontal = Image::from_fn(h, w, ch, |y, x, c| {
        weights
            .iter()
            .enumerate()
            .map(|(k, wt)| wt * image.get(y, reflect(x as isize + k as isize - half, w), c))
            .sum()
    });
    Image::from_fn(h, w, ch, |y, x, c| {
        weights
            .iter()
            .enumerate()
            .map(|(k, wt)| wt * horizontal.get(reflect(y as isize + k as isize - half, h), x, c))
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pattern() -> Image {
        Image::from_fn(16, 16, 3, |y, x, c| ((x * 3 + y + c) % 17) as f64 / 16.0)
    }

    #[test]
    fn identity_pipeline_is_exact() {
        let img = pattern();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(augment(&img, &AugmentationConfig::identity((16, 16)), &mut rng), img);
        }
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = pattern();
        assert_eq!(rotate(&img, 0.0, 1.0), img);
    }

    #[test]
    fn quarter_turn_moves_top_to_left() {
        let img = Image::from_fn(4, 4, 1, |y, x, _| (y * 4 + x) as f64);
        let r = rotate(&img, 90.0, -1.0);
        // Output left-middle comes from input top-middle.
        assert_eq!(r.get(1, 0, 0), img.get(0, 2, 0));
    }

    #[test]
    fn hsv_round_trip() {
        for &(r, g, b) in &[(0.2, 0.5, 0.9), (1.0, 0.0, 0.0), (0.3, 0.3, 0.3), (0.9, 0.8, 0.1)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let flat = Image::filled(8, 8, 3, 0.4);
        let b = gaussian_blur(&flat, 5, 1.3);
        assert!(b.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn outputs_stay_in_range_with_configured_shape() {
        let img = pattern();
        let cfg = AugmentationConfig::single_view((12, 10));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (out, t) = augment_with_trace(&img, &cfg, &mut rng);
            assert_eq!(out.shape(), (12, 10, 3));
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            if let Some(s) = t.crop.sampled_scale {
                assert!((cfg.crop.scale.0..cfg.crop.scale.1).contains(&s));
            }
        }
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
    }
}
