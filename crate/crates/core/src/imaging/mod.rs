//! Discrete images, their L² geometry and the warping action of a transformation.

mod idx;
mod pgm;

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use pgm::{load_pgm, parse_pgm, save_pgm, encode_pgm};

use crate::error::{Error, Result};
use crate::geometry::{about_center, apply_inverse_to_point, GroupKind, TransformParams};

/// Row-major grayscale raster with unit pixel area.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer has {} entries, expected {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite pixel value"));
        }
        Ok(Self { width, height, pixels })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel center.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Geometric center `((W-1)/2, (H-1)/2)` in pixel coordinates.
    pub fn center(&self) -> [f64; 2] {
        [(self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            });
        }
        Ok(())
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.same_shape(other)?;
        let pixels = self.pixels.iter().zip(&other.pixels).map(|(a, b)| a - b).collect();
        Ok(Image { width: self.width, height: self.height, pixels })
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.same_shape(other)?;
        let pixels = self.pixels.iter().zip(&other.pixels).map(|(a, b)| a + b).collect();
        Ok(Image { width: self.width, height: self.height, pixels })
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &Image) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.pixels.iter_mut().zip(&other.pixels) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|v| v * s).collect(),
        }
    }

    /// Bilinear sample at continuous coordinates, zero outside the raster.
    pub fn bilinear(&self, sx: f64, sy: f64) -> f64 {
        let x0f = sx.floor();
        let y0f = sy.floor();
        let fx = sx - x0f;
        let fy = sy - y0f;
        let (w, h) = (self.width as i64, self.height as i64);
        if x0f < -1.0 || y0f < -1.0 || x0f >= w as f64 || y0f >= h as f64 {
            return 0.0;
        }
        let x0 = x0f as i64;
        let y0 = y0f as i64;
        let fetch = |x: i64, y: i64| {
            if x < 0 || y < 0 || x >= w || y >= h {
                0.0
            } else {
                self.pixels[(y * w + x) as usize]
            }
        };
        let mut v = 0.0;
        if fx < 1.0 && fy < 1.0 {
            v += (1.0 - fx) * (1.0 - fy) * fetch(x0, y0);
        }
        if fx > 0.0 {
            v += fx * (1.0 - fy) * fetch(x0 + 1, y0);
        }
        if fy > 0.0 {
            v += (1.0 - fx) * fy * fetch(x0, y0 + 1);
            if fx > 0.0 {
                v += fx * fy * fetch(x0 + 1, y0 + 1);
            }
        }
        v
    }
}

pub fn l2_norm(img: &Image) -> f64 {
    img.pixels.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn inner_product(f: &Image, g: &Image) -> Result<f64> {
    f.same_shape(g)?;
    Ok(dot(&f.pixels, &g.pixels))
}

/// `‖f − g‖₂`.
pub fn l2_distance(f: &Image, g: &Image) -> Result<f64> {
    f.same_shape(g)?;
    Ok(f.pixels
        .iter()
        .zip(&g.pixels)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Applies the unitary action of `eta` about the coordinate origin:
/// `out(x) = a⁻¹ · img(R_{-θ}(x − b) / a)` with bilinear sampling and zero padding.
pub fn warp(img: &Image, eta: &TransformParams, kind: GroupKind) -> Result<Image> {
    eta.validate(kind)?;
    if eta.is_identity(0.0) {
        return Ok(img.clone());
    }
    let gain = 1.0 / eta.a;
    Ok(Image::from_fn(img.width, img.height, |x, y| {
        let s = apply_inverse_to_point(eta, [x as f64, y as f64]);
        gain * img.bilinear(s[0], s[1])
    }))
}

/// Warps with rotation and scaling taken about the image center.
pub fn warp_about_center(img: &Image, eta: &TransformParams, kind: GroupKind) -> Result<Image> {
    eta.validate(kind)?;
    warp(img, &about_center(eta, img.center()), GroupKind::Similarity2D)
}
