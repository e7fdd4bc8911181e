//! Dense `f64` images in `[0, 1]`, HWC layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                expected: height * width * channels,
                got: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    /// Replicates a single-channel plane into `channels` channels.
    pub fn from_gray(height: usize, width: usize, channels: usize, gray: &[f64]) -> Result<Self> {
        if gray.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                got: gray.len(),
            });
        }
        Ok(Self::from_fn(height, width, channels, |y, x, _| gray[y * width + x]))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Rec. 601 luma for RGB, identity for single-channel images.
    pub fn luma(&self) -> Vec<f64> {
        (0..self.height * self.width)
            .map(|i| {
                let px = &self.data[i * self.channels..(i + 1) * self.channels];
                if self.channels >= 3 {
                    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
                } else {
                    px[0]
                }
            })
            .collect()
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mirrored(&self) -> Self {
        Self::from_fn(self.height, self.width, self.channels, |y, x, c| {
            self.get(y, self.width - 1 - x, c)
        })
    }

    /// Bilinear sample at continuous pixel-center coordinates, or `None`
    /// outside the image.
    pub fn sample_bilinear(&self, y: f64, x: f64, c: usize) -> Option<f64> {
        if y < -0.5 || x < -0.5 || y > self.height as f64 - 0.5 || x > self.width as f64 - 0.5 {
            return None;
        }
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let y0 = yc.floor() as usize;
        let x0 = xc.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let fy = yc - y0 as f64;
        let fx = xc - x0 as f64;
        let top = self.get(y0, x0, c) * (1.0 - fx) + self.get(y0, x1, c) * fx;
        let bottom = self.get(y1, x0, c) * (1.0 - fx) + self.get(y1, x1, c) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Bilinear resize of the region `(top, left, h, w)` to `(out_h, out_w)`.
    /// Returns an exact copy when the crop is the whole image at equal size.
    pub fn resized_crop(
        &self,
        top: f64,
        left: f64,
        h: f64,
        w: f64,
        out_h: usize,
        out_w: usize,
    ) -> Self {
        if top == 0.0
            && left == 0.0
            && h == self.height as f64
            && w == self.width as f64
            && out_h == self.height
            && out_w == self.width
        {
            return self.clone();
        }
        let sy = h / out_h as f64;
        let sx = w / out_w as f64;
        Self::from_fn(out_h, out_w, self.channels, |y, x, c| {
            let src_y = top + (y as f64 + 0.5) * sy - 0.5;
            let src_x = left + (x as f64 + 0.5) * sx - 0.5;
            let yc = src_y.clamp(-0.5, self.height as f64 - 0.5);
            let xc = src_x.clamp(-0.5, self.width as f64 - 0.5);
            self.sample_bilinear(yc, xc, c).unwrap_or(0.0)
        })
    }

    pub fn resize(&self, out_h: usize, out_w: usize) -> Self {
        self.resized_crop(0.0, 0.0, self.height as f64, self.width as f64, out_h, out_w)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::parse(path, e))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
        Self::new(h as usize, w as usize, 3, data)
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c: usize| {
                let c = if self.channels >= 3 { c } else { 0 };
                (self.get(y as usize, x as usize, c).clamp(0.0, 1.0) * 255.0).round() as u8
            };
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save(path)
            .map_err(|e| Error::parse(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_resize_is_exact() {
        let img = Image::from_fn(5, 7, 3, |y, x, c| (y * 7 + x + c) as f64 / 40.0);
        assert_eq!(img.resize(5, 7), img);
    }

    #[test]
    fn upscale_of_constant_is_constant() {
        let img = Image::filled(4, 4, 3, 0.25);
        let up = img.resize(9, 13);
        assert!(up.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn mirror_twice_is_identity() {
        let img = Image::from_fn(3, 4, 1, |y, x, _| (y * 4 + x) as f64);
        assert_eq!(img.mirrored().mirrored(), img);
        assert_eq!(img.mirrored().get(0, 0, 0), 3.0);
    }

    #[test]
    fn png_round_trip_quantizes_to_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(3, 2, 3, |y, x, c| ((y * 2 + x) * 3 + c) as f64 / 17.0);
        img.save_png(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
