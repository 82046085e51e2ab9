//! Row-column 2-D FFT on top of one-dimensional `rustfft` plans.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.width, self.height)
    }
}

/// Smallest integer `≥ n` whose only prime factors are 2, 3 and 5.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(data, scratch, &self.row_fwd, &self.col_fwd);
    }

    /// Unnormalized inverse; divide by `len()` to undo `forward`.
    pub fn inverse(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(data, scratch, &self.row_inv, &self.col_inv);
    }

    fn run(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        let (w, h) = (self.width, self.height);
        row.process(data);
        scratch.clear();
        scratch.resize(w * h, Complex64::new(0.0, 0.0));
        for y in 0..h {
            for x in 0..w {
                scratch[x * h + y] = data[y * w + x];
            }
        }
        col.process(scratch);
        for x in 0..w {
            for y in 0..h {
                data[y * w + x] = scratch[x * h + y];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(7), 8);
        assert_eq!(smooth_size(97), 100);
        assert_eq!(smooth_size(121), 125);
        assert_eq!(smooth_size(1), 1);
    }

    #[test]
    fn matches_direct_dft() {
        let (w, h) = (6, 5);
        let data: Vec<Complex64> = (0..w * h).map(|i| Complex64::new((i * 7 % 11) as f64, (i % 3) as f64)).collect();
        let fft = Fft2::new(w, h);
        let mut out = data.clone();
        let mut scratch = Vec::new();
        fft.forward(&mut out, &mut scratch);
        for ky in 0..h {
            for kx in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let ang = -2.0 * std::f64::consts::PI * ((kx * x) as f64 / w as f64 + (ky * y) as f64 / h as f64);
                        acc += data[y * w + x] * Complex64::from_polar(1.0, ang);
                    }
                }
                assert!((acc - out[ky * w + kx]).norm() < 1e-9);
            }
        }
        fft.inverse(&mut out, &mut scratch);
        for (a, b) in out.iter().zip(&data) {
            assert!((a / (w * h) as f64 - b).norm() < 1e-12);
        }
    }
}
