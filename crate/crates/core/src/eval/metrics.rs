//! Image quality metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;

/// Reported for identical images instead of infinity.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            a: a.shape(),
            b: b.shape(),
        });
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// `10 log10(1 / MSE)` over all channels, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

/// Normalized separable Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filter of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| taps[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| taps[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean local SSIM on luma over every fully contained 11x11 Gaussian window.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            got: (h, w),
            window: SSIM_WINDOW,
        });
    }
    let (x, y) = (a.luma(), b.luma());
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let (mx, oh, ow) = filter_valid(&x, h, w, &taps);
    let (my, ..) = filter_valid(&y, h, w, &taps);
    let (mxx, ..) = filter_valid(&prod(&x, &x), h, w, &taps);
    let (myy, ..) = filter_valid(&prod(&y, &y), h, w, &taps);
    let (mxy, ..) = filter_valid(&prod(&x, &y), h, w, &taps);
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
            / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / (oh * ow) as f64)
}

/// A learned-perceptual-distance stand-in: nonnegative, symmetric, zero on
/// identical inputs.
pub trait PerceptualAdapter: Send + Sync {
    /// Recorded in reports so mock and real numbers are never mixed.
    fn identity(&self) -> String;

    fn distance(&self, a: &Image, b: &Image) -> Result<f64>;
}

/// Fixed random 3x3 convolution features at two scales, channel-normalized
/// per pixel, compared by mean squared difference.
#[derive(Debug, Clone, PartialEq)]
pub struct MockPerceptual {
    seed: u64,
    /// `[feature][channel][ky][kx]`, flattened.
    filters: Vec<f64>,
    features: usize,
}

const MOCK_CHANNELS: usize = 3;

impl MockPerceptual {
    pub fn new(seed: u64) -> Self {
        let features = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filters = (0..features * MOCK_CHANNELS * 9)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Self {
            seed,
            filters,
            features,
        }
    }

    fn feature_map(&self, img: &Image) -> Vec<Vec<f64>> {
        let (h, w) = (img.height(), img.width());
        let px = |y: isize, x: isize, c: usize| {
            let yy = y.clamp(0, h as isize - 1) as usize;
            let xx = x.clamp(0, w as isize - 1) as usize;
            img.get(yy, xx, c.min(img.channels() - 1))
        };
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut f: Vec<f64> = (0..self.features)
                    .map(|k| {
                        let mut acc = 0.0;
                        for c in 0..MOCK_CHANNELS {
                            for dy in 0..3 {
                                for dx in 0..3 {
                                    let wt = self.filters[((k * MOCK_CHANNELS + c) * 3 + dy) * 3 + dx];
                                    acc += wt * (px(y + dy as isize - 1, x + dx as isize - 1, c) - 0.5);
                                }
                            }
                        }
                        acc.max(0.0)
                    })
                    .collect();
                let n = f.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-10;
                f.iter_mut().for_each(|v| *v /= n);
                out.push(f);
            }
        }
        out
    }

    fn pooled(img: &Image) -> Option<Image> {
        let (h, w) = (img.height() / 2, img.width() / 2);
        (h >= 1 && w >= 1).then(|| {
            Image::from_fn(h, w, img.channels(), |y, x, c| {
                (img.get(2 * y, 2 * x, c)
                    + img.get(2 * y + 1, 2 * x, c)
                    + img.get(2 * y, 2 * x + 1, c)
                    + img.get(2 * y + 1, 2 * x + 1, c))
                    / 4.0
            })
        })
    }

    fn scale_distance(&self, a: &Image, b: &Image) -> f64 {
        let fa = self.feature_map(a);
        let fb = self.feature_map(b);
        let total: f64 = fa
            .iter()
            .zip(&fb)
            .map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
            .sum();
        total / fa.len() as f64
    }
}

impl PerceptualAdapter for MockPerceptual {
    fn identity(&self) -> String {
        format!("mock-random-conv/seed={}", self.seed)
    }

    fn distance(&self, a: &Image, b: &Image) -> Result<f64> {
        same_shape(a, b)?;
        let mut d = self.scale_distance(a, b);
        if let (Some(pa), Some(pb)) = (Self::pooled(a), Self::pooled(b)) {
            d += self.scale_distance(&pa, &pb);
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn random_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, 3, |_, _, _| rng.random::<f64>())
    }

    /// Direct windowed evaluation, one window at a time.
    fn ssim_brute(a: &Image, b: &Image) -> f64 {
        let (x, y) = (a.luma(), b.luma());
        let (h, w) = (a.height(), a.width());
        let g = gaussian_taps(11, 1.5);
        let mut total = 0.0;
        let mut count = 0.0;
        for top in 0..=h - 11 {
            for left in 0..=w - 11 {
                let (mut ux, mut uy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wt = g[i] * g[j];
                        let (p, q) = (x[(top + i) * w + left + j], y[(top + i) * w + left + j]);
                        ux += wt * p;
                        uy += wt * q;
                        sxx += wt * p * p;
                        syy += wt * q * q;
                        sxy += wt * p * q;
                    }
                }
                let (vx, vy, c) = (sxx - ux * ux, syy - uy * uy, sxy - ux * uy);
                total += (2.0 * ux * uy + 1e-4) * (2.0 * c + 9e-4) / ((ux * ux + uy * uy + 1e-4) * (vx + vy + 9e-4));
                count += 1.0;
            }
        }
        total / count
    }

    #[test]
    fn psnr_edges() {
        let a = random_image(1, 8, 8);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        let z = Image::filled(4, 4, 3, 0.0);
        let o = Image::filled(4, 4, 3, 1.0);
        assert_eq!(psnr(&z, &o).unwrap(), 0.0);
        assert!(matches!(psnr(&z, &Image::filled(4, 5, 3, 0.0)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn psnr_matches_two_line_oracle() {
        for s in 0..20 {
            let (a, b) = (random_image(s, 9, 7), random_image(s + 100, 9, 7));
            let m: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data().len() as f64;
            assert!((psnr(&a, &b).unwrap() - 10.0 * (1.0 / m).log10()).abs() < 1e-10);
        }
    }

    #[test]
    fn ssim_matches_brute_force() {
        for s in 0..10 {
            let (a, b) = (random_image(s, 16, 19), random_image(s + 50, 16, 19));
            assert!((ssim(&a, &b).unwrap() - ssim_brute(&a, &b)).abs() < 1e-6);
        }
        let a = random_image(3, 12, 12);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ssim(&Image::filled(10, 20, 3, 0.0), &Image::filled(10, 20, 3, 0.0)), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn ssim_constant_complements() {
        let a = Image::filled(12, 12, 3, 0.25);
        let b = Image::filled(12, 12, 3, 0.75);
        let (ua, ub) = (0.25f64, 0.75f64);
        let want = (2.0 * ua * ub + SSIM_C1) * SSIM_C2 / ((ua * ua + ub * ub + SSIM_C1) * SSIM_C2);
        assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn mock_perceptual_contract() {
        let p = MockPerceptual::new(0);
        let a = random_image(1, 16, 16);
        let b = random_image(2, 16, 16);
        assert_eq!(p.distance(&a, &a).unwrap(), 0.0);
        assert!((p.distance(&a, &b).unwrap() - p.distance(&b, &a).unwrap()).abs() < 1e-12);
        assert!(p.distance(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn mock_perceptual_grows_with_noise() {
        let p = MockPerceptual::new(0);
        let means: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .map(|&amp| {
                (0..100)
                    .map(|s| {
                        let base = Image::from_fn(16, 16, 3, |y, x, c| (y + x + c) as f64 / 34.0);
                        let mut rng = ChaCha8Rng::seed_from_u64(s);
                        let n = Normal::new(0.0, amp).unwrap();
                        let noisy = Image::from_fn(16, 16, 3, |y, x, c| (base.get(y, x, c) + n.sample(&mut rng)).clamp(0.0, 1.0));
                        p.distance(&base, &noisy).unwrap()
                    })
                    .sum::<f64>()
                    / 100.0
            })
            .collect();
        assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
    }
}
