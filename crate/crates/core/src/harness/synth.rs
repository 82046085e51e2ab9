//! Procedural test images and random transformations.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{GroupKind, TransformParams};
use crate::imaging::{warp_about_center, Image};

/// Sampling ranges for random center-relative transformations. Translation components are drawn
/// uniformly in `[-max_translation, max_translation]`, the scale uniformly in
/// `[scale_min, scale_max]` and the angle uniformly in `[0, max_rotation)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformRanges {
    pub max_translation: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub max_rotation: f64,
}

impl TransformRanges {
    pub fn identity() -> Self {
        Self { max_translation: 0.0, scale_min: 1.0, scale_max: 1.0, max_rotation: 0.0 }
    }

    /// Translation up to `max_translation`, scale in `[scale_min, scale_max]`, any rotation.
    pub fn similarity(max_translation: f64, scale_min: f64, scale_max: f64) -> Self {
        Self { max_translation, scale_min, scale_max, max_rotation: 2.0 * PI }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let half = width.min(height) as f64 / 2.0;
        if !(self.max_translation >= 0.0 && self.max_translation <= half) {
            return Err(Error::Config(format!("translation range {} exceeds half the image size {half}", self.max_translation)));
        }
        if !(self.scale_min >= 0.5 && self.scale_min <= self.scale_max && self.scale_max <= 1.5) {
            return Err(Error::Config(format!("scale range [{}, {}] not within [0.5, 1.5]", self.scale_min, self.scale_max)));
        }
        if !(self.max_rotation >= 0.0 && self.max_rotation <= 2.0 * PI + 1e-12) {
            return Err(Error::Config(format!("rotation range {} outside [0, 2π]", self.max_rotation)));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> TransformParams {
        let mut uniform = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let t = self.max_translation;
        let bx = uniform(-t, t);
        let by = uniform(-t, t);
        let a = uniform(self.scale_min, self.scale_max);
        let theta = uniform(0.0, self.max_rotation);
        TransformParams::new(bx, by, a, theta)
    }
}

/// `n` copies of `img` warped about its center by random transformations, with the
/// center-relative parameters of each.
pub fn synth_transformed(img: &Image, n: usize, ranges: &TransformRanges, seed: u64) -> Result<Vec<(Image, TransformParams)>> {
    ranges.validate(img.width(), img.height())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let eta = ranges.sample(&mut rng);
            Ok((warp_about_center(img, &eta, GroupKind::Similarity2D)?, eta))
        })
        .collect()
}

fn gaussian_blob(img: &mut Image, cx: f64, cy: f64, sx: f64, sy: f64, theta: f64, amp: f64) {
    let (s, c) = theta.sin_cos();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let u = (c * dx + s * dy) / sx;
            let v = (-s * dx + c * dy) / sy;
            let r = u * u + v * v;
            if r < 40.0 {
                let old = img.get(x, y);
                img.set(x, y, old + amp * (-0.5 * r).exp());
            }
        }
    }
}

fn normalize_peak(img: &mut Image) {
    let m = img.pixels().iter().fold(0.0f64, |m, &v| m.max(v));
    if m > 0.0 {
        img.pixels_mut().iter_mut().for_each(|v| *v /= m);
    }
}

/// Asymmetric textured object: several elongated blobs of varying size and orientation around the
/// center, modulated by a smooth stripe texture.
pub fn synthetic_object(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::zeros(size, size);
    let c = (size as f64 - 1.0) / 2.0;
    let r = size as f64 * 0.18;
    let n = rng.gen_range(5..=7);
    for _ in 0..n {
        let ang = rng.gen_range(0.0..2.0 * PI);
        let dist = rng.gen_range(0.0..r);
        let sx = rng.gen_range(0.05..0.12) * size as f64;
        let sy = rng.gen_range(0.02..0.05) * size as f64;
        gaussian_blob(
            &mut img,
            c + dist * ang.cos(),
            c + dist * ang.sin(),
            sx,
            sy,
            rng.gen_range(0.0..PI),
            rng.gen_range(0.5..1.0),
        );
    }
    let (kx, ky) = (rng.gen_range(0.1..0.3), rng.gen_range(0.1..0.3));
    for y in 0..size {
        for x in 0..size {
            let v = img.get(x, y) * (1.0 + 0.25 * (kx * x as f64 + ky * y as f64).sin());
            img.set(x, y, v);
        }
    }
    normalize_peak(&mut img);
    img
}

/// Two round balls of slightly different radii on either side of the center.
pub fn ball_pair(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::zeros(size, size);
    let c = (size as f64 - 1.0) / 2.0;
    let n = size as f64;
    let sep = n * rng.gen_range(0.15..0.19);
    let phi = rng.gen_range(0.0..PI);
    for k in [-1.0, 1.0] {
        let radius = n * rng.gen_range(0.04..0.05);
        gaussian_blob(&mut img, c + k * sep * phi.cos(), c + k * sep * phi.sin(), radius, radius, 0.0, 1.0);
    }
    normalize_peak(&mut img);
    img
}

/// Adds 40 faint round specks at random places, independent of the scene content.
pub fn add_clutter(img: &mut Image, amplitude: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (img.width() as f64, img.height() as f64);
    for _ in 0..40 {
        let (x, y) = (rng.gen_range(0.0..w), rng.gen_range(0.0..h));
        let s = rng.gen_range(1.0..3.0);
        gaussian_blob(img, x, y, s, s, 0.0, amplitude * rng.gen_range(0.5..1.0));
    }
}

/// Three round blobs of different sizes spread over the frame.
pub fn ball_field(size: usize, seed: u64) -> Image {
    ball_field_scaled(size, seed, 1.0)
}

/// [`ball_field`] with every blob dilated in place by `radius_factor`, positions unchanged.
pub fn ball_field_scaled(size: usize, seed: u64, radius_factor: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::zeros(size, size);
    let c = (size as f64 - 1.0) / 2.0;
    for _ in 0..3 {
        let ang = rng.gen_range(0.0..2.0 * PI);
        let dist = rng.gen_range(0.15..0.3) * size as f64;
        let radius = size as f64 * rng.gen_range(0.03..0.05) * radius_factor;
        gaussian_blob(&mut img, c + dist * ang.cos(), c + dist * ang.sin(), radius, radius, 0.0, rng.gen_range(0.6..1.0));
    }
    img
}
