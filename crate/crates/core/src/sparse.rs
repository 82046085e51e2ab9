//! Non-negative matching pursuit and sparse expansions `p = Σ cᵢ φ_{γᵢ}`.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::dictionary::{render_atom_into, Dictionary, DictionaryConfig, MIN_ATOM_ENERGY};
use crate::error::{Error, Result};
use crate::geometry::{compose_unchecked, lex_key, Stabilizer, TransformParams, PARAM_TOL};
use crate::imaging::{dot, Image};

/// A non-negative expansion over atoms of one dictionary configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseApprox {
    pub coeffs: Vec<f64>,
    pub supports: Vec<TransformParams>,
    cfg: Arc<DictionaryConfig>,
}

impl SparseApprox {
    pub fn empty(cfg: Arc<DictionaryConfig>) -> Self {
        Self {
            coeffs: Vec::new(),
            supports: Vec::new(),
            cfg,
        }
    }

    pub fn new(cfg: Arc<DictionaryConfig>, coeffs: Vec<f64>, supports: Vec<TransformParams>) -> Result<Self> {
        if coeffs.len() != supports.len() {
            return Err(Error::invalid(format!(
                "{} coefficients for {} supports",
                coeffs.len(),
                supports.len()
            )));
        }
        if let Some(c) = coeffs.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::invalid(format!("coefficients must be positive, got {c}")));
        }
        for g in &supports {
            g.validate(cfg.kind)?;
        }
        Ok(Self { coeffs, supports, cfg })
    }

    pub fn config(&self) -> &DictionaryConfig {
        &self.cfg
    }

    pub fn shared_config(&self) -> Arc<DictionaryConfig> {
        Arc::clone(&self.cfg)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, &TransformParams)> {
        self.coeffs.iter().copied().zip(&self.supports)
    }

    /// Adds `c · φ_γ`, merging with an existing support of the same stabilizer coset.
    pub fn push_merged(&mut self, c: f64, gamma: TransformParams, stab: &Stabilizer) {
        if let Some(i) = self.supports.iter().position(|s| stab.same_coset(s, &gamma, PARAM_TOL)) {
            self.coeffs[i] += c;
        } else {
            self.coeffs.push(c);
            self.supports.push(gamma);
        }
    }

    /// Renders `Σ cᵢ φ_{γᵢ}` into a raw buffer of the configured size.
    pub fn synthesize_into(&self, buf: &mut [f64]) {
        let (w, h) = (self.cfg.width, self.cfg.height);
        for (c, g) in self.atoms() {
            render_atom_into(buf, w, h, &self.cfg.mother, g, c);
        }
    }

    pub fn synthesize(&self) -> Image {
        let mut buf = vec![0.0; self.cfg.width * self.cfg.height];
        self.synthesize_into(&mut buf);
        Image::from_vec(self.cfg.width, self.cfg.height, buf).expect("configured size is valid")
    }

    /// Indices of atoms whose in-domain energy is below the escape threshold.
    pub fn escaped_atoms(&self) -> Vec<usize> {
        self.supports
            .iter()
            .enumerate()
            .filter(|(_, g)| crate::dictionary::atom_energy(&self.cfg, g) < MIN_ATOM_ENERGY)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("c,bx,by,a,theta\n");
        for (c, g) in self.atoms() {
            let _ = writeln!(out, "{c},{},{},{},{}", g.b[0], g.b[1], g.a, g.theta);
        }
        out
    }

    pub fn from_csv(text: &str, cfg: Arc<DictionaryConfig>) -> Result<Self> {
        let mut coeffs = Vec::new();
        let mut supports = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let row = line.trim();
            let at = offset;
            offset += line.len();
            if row.is_empty() || row.starts_with('#') || row.starts_with('c') {
                continue;
            }
            let v: Vec<f64> = row
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(at, format!("bad row '{row}'")))?;
            if v.len() != 5 {
                return Err(Error::parse(at, format!("expected 5 fields, got {}", v.len())));
            }
            coeffs.push(v[0]);
            supports.push(TransformParams::new(v[1], v[2], v[3], v[4]));
        }
        Self::new(cfg, coeffs, supports)
    }
}

/// `Σ cᵢ φ_{γᵢ}` as an image.
pub fn synthesize(approx: &SparseApprox) -> Image {
    approx.synthesize()
}

/// Replaces every support `γᵢ` by `η ∘ γᵢ`, keeping the coefficients.
pub fn transform_approx(approx: &SparseApprox, eta: &TransformParams) -> Result<SparseApprox> {
    eta.validate(approx.cfg.kind)?;
    let out = SparseApprox {
        coeffs: approx.coeffs.clone(),
        supports: approx.supports.iter().map(|g| compose_unchecked(eta, g)).collect(),
        cfg: Arc::clone(&approx.cfg),
    };
    let escaped = out.escaped_atoms();
    if !escaped.is_empty() {
        log::debug!("transform {eta} moves atoms {escaped:?} out of the domain");
    }
    Ok(out)
}

/// One greedy selection.
#[derive(Debug, Clone, PartialEq)]
pub struct NmpStep {
    pub gamma: TransformParams,
    /// Correlation with the unit-normalized (in-domain) atom.
    pub correlation: f64,
    pub coef: f64,
}

#[derive(Debug, Clone)]
pub struct NmpOutput {
    pub approx: SparseApprox,
    /// `‖r₀‖, ‖r₁‖, ...`, one entry more than the number of steps.
    pub residual_norms: Vec<f64>,
    pub steps: Vec<NmpStep>,
    pub residual: Image,
}

struct Pick {
    score: f64,
    shape: usize,
    bx: usize,
    by: usize,
}

/// Non-negative matching pursuit with at most `k` steps; stops early when the best correlation
/// is not positive or when the residual norm drops to `stop_threshold`.
pub fn nmp(img: &Image, k: usize, dict: &Dictionary, stop_threshold: f64) -> Result<NmpOutput> {
    if k < 1 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let cfg = dict.config();
    let (w, h) = (cfg.width, cfg.height);
    if img.width() != w || img.height() != h {
        return Err(Error::DimensionMismatch {
            left_w: img.width(),
            left_h: img.height(),
            right_w: w,
            right_h: h,
        });
    }
    let stab = dict.stabilizer();
    let fft = &dict.fft;
    let (mw, mh) = (fft.width(), fft.height());
    let inv_len = 1.0 / fft.len() as f64;

    let mut residual = img.pixels().to_vec();
    let mut norm = dot(&residual, &residual).sqrt();
    let mut approx = SparseApprox::empty(Arc::new(cfg.clone()));
    let mut trace = vec![norm];
    let mut steps = Vec::new();
    let mut spectrum = vec![Complex64::new(0.0, 0.0); mw * mh];
    let mut scratch = Vec::new();

    for _ in 0..k {
        if norm <= stop_threshold {
            break;
        }
        spectrum.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for y in 0..h {
            for x in 0..w {
                spectrum[y * mw + x].re = residual[y * w + x];
            }
        }
        fft.forward(&mut spectrum, &mut scratch);

        let per_shape: Vec<Option<Pick>> = dict
            .shapes
            .par_iter()
            .enumerate()
            .map_init(
                || (vec![Complex64::new(0.0, 0.0); mw * mh], Vec::new()),
                |(buf, scr), (si, shape)| {
                    for ((o, r), s) in buf.iter_mut().zip(&spectrum).zip(&shape.spectrum) {
                        *o = r * s;
                    }
                    fft.inverse(buf, scr);
                    let mut best: Option<Pick> = None;
                    for &by in &dict.grid_y {
                        for &bx in &dict.grid_x {
                            let e = shape.energy[by * w + bx];
                            if e < MIN_ATOM_ENERGY {
                                continue;
                            }
                            let score = buf[by * mw + bx].re * inv_len / e.sqrt();
                            if best.as_ref().is_none_or(|b| score > b.score + 1e-10 * b.score.abs()) {
                                best = Some(Pick { score, shape: si, bx, by });
                            }
                        }
                    }
                    best
                },
            )
            .collect();

        // shapes are in (scale, θ) order and each scan runs in (b_y, b_x) order, so keeping the
        // first strict maximum implements the lexicographic tie rule
        let mut best: Option<Pick> = None;
        for p in per_shape.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| p.score > b.score + 1e-10 * b.score.abs()) {
                best = Some(p);
            }
        }
        let Some(pick) = best else { break };
        if pick.score <= 0.0 {
            break;
        }
        let shape = &dict.shapes[pick.shape];
        // exact correlation over the clipped kernel
        let mut c = 0.0;
        for_kernel(shape, pick.bx, pick.by, w, h, |idx, kv| c += residual[idx] * kv);
        let e = shape.energy[pick.by * w + pick.bx];
        if c <= 0.0 {
            break;
        }
        let coef = c / e;
        for_kernel(shape, pick.bx, pick.by, w, h, |idx, kv| residual[idx] -= coef * kv);
        let gamma = TransformParams::new(pick.bx as f64, pick.by as f64, shape.a, shape.theta);
        approx.push_merged(coef, gamma, stab);
        steps.push(NmpStep {
            gamma,
            correlation: c / e.sqrt(),
            coef,
        });
        norm = dot(&residual, &residual).sqrt();
        trace.push(norm);
    }

    Ok(NmpOutput {
        approx,
        residual_norms: trace,
        steps,
        residual: Image::from_vec(w, h, residual)?,
    })
}

fn for_kernel(shape: &crate::dictionary::Shape, bx: usize, by: usize, w: usize, h: usize, mut f: impl FnMut(usize, f64)) {
    for ky in 0..shape.kh {
        let y = by as i64 + ky as i64 - shape.oy;
        if y < 0 || y >= h as i64 {
            continue;
        }
        for kx in 0..shape.kw {
            let x = bx as i64 + kx as i64 - shape.ox;
            if x < 0 || x >= w as i64 {
                continue;
            }
            f(y as usize * w + x as usize, shape.kernel[ky * shape.kw + kx]);
        }
    }
}

/// Orders supports lexicographically by (scale, θ, b_y, b_x); useful for comparisons.
pub fn sorted_supports(approx: &SparseApprox) -> Vec<(f64, TransformParams)> {
    let mut v: Vec<_> = approx.atoms().map(|(c, g)| (c, *g)).collect();
    v.sort_by(|x, y| lex_key(&x.1).partial_cmp(&lex_key(&y.1)).unwrap());
    v
}
