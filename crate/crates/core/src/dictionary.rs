//! Parametric dictionaries `{φ_γ : γ ∈ T_d}` built from a mother function.
//!
//! Atoms are sampled analytically at pixel centers. The anisotropic Gaussian is
//! `exp(-(u/ν)² - v²)` in local coordinates `(u, v) = R_{-θ}(x - b) / a`, truncated to the
//! local rectangle `|u| ≤ 2.5√2·ν`, `|v| ≤ 2.5√2` (five standard deviations per axis).
//!
//! Normalization uses the energy of all lattice samples inside the truncation region, including
//! samples that fall outside the image. Atoms lying inside the domain therefore have unit norm,
//! while atoms cut by the border keep only their visible part. This makes occlusion behave the
//! same way for dictionary atoms and for transformed atoms.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::fft2::{smooth_size, Fft2};
use crate::geometry::{stabilizer_of_gaussian, GroupKind, Stabilizer, TransformParams};
use crate::imaging::{dot, Image};

/// Fraction of a centered atom's energy that must fall inside the domain for its scale to be kept.
pub const MIN_CENTERED_ENERGY: f64 = 0.99;

/// In-domain energy below which an atom is considered to have left the image.
pub const MIN_ATOM_ENERGY: f64 = 1e-12;

const TRUNCATION: f64 = 2.5 * SQRT_2;

/// Samples this close outside the truncation box are kept, so that supports which agree up to
/// rounding render the same set of samples.
const EDGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotherFunction {
    /// `exp(-(x/ν)² - y²)` with `ν ≥ 1`.
    GaussianAniso { nu: f64 },
    /// Indicator of `len` consecutive samples along x, for 1-pixel-high images.
    Box1D { len: usize },
}

impl MotherFunction {
    pub fn gaussian(nu: f64) -> Self {
        MotherFunction::GaussianAniso { nu }
    }

    /// Continuous normalization constant `ξ` with `‖φ/ξ‖₂ = 1`.
    pub fn xi(&self) -> f64 {
        match *self {
            MotherFunction::GaussianAniso { nu } => (PI * nu / 2.0).sqrt(),
            MotherFunction::Box1D { len } => (len as f64).sqrt(),
        }
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(*self, MotherFunction::GaussianAniso { nu } if (nu - 1.0).abs() < 1e-12)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            MotherFunction::GaussianAniso { nu } if !(nu >= 1.0 && nu.is_finite()) => {
                Err(Error::Config(format!("nu must be >= 1, got {nu}")))
            }
            MotherFunction::Box1D { len: 0 } => Err(Error::Config("box length must be positive".into())),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MotherFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MotherFunction::GaussianAniso { nu } => write!(f, "gaussian(nu={nu})"),
            MotherFunction::Box1D { len } => write!(f, "box(len={len})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryConfig {
    pub kind: GroupKind,
    pub mother: MotherFunction,
    pub width: usize,
    pub height: usize,
    /// Translation grid spacing in pixels.
    pub trans_step: usize,
    /// Rotation grid spacing in radians.
    pub rot_step: f64,
    /// Ascending scale values, all `≥ 1`.
    pub scales: Vec<f64>,
}

impl DictionaryConfig {
    /// Gaussian defaults: `ν = 4`, rotation step `π/8`, half-octave scales up to the
    /// centered-energy bound, unit translation step.
    pub fn gaussian(kind: GroupKind, nu: f64, width: usize, height: usize) -> Result<Self> {
        let mut cfg = Self {
            kind,
            mother: MotherFunction::gaussian(nu),
            width,
            height,
            trans_step: 1,
            rot_step: PI / 8.0,
            scales: vec![1.0],
        };
        cfg.scales = cfg.octave_scales(0.5, f64::INFINITY)?;
        Ok(cfg)
    }

    pub fn default_for(width: usize, height: usize) -> Result<Self> {
        Self::gaussian(GroupKind::Similarity2D, 4.0, width, height)
    }

    /// Translation-only 1-D box dictionary on a `width × 1` raster.
    pub fn box1d(len: usize, width: usize, trans_step: usize) -> Self {
        Self {
            kind: GroupKind::Translation2D,
            mother: MotherFunction::Box1D { len },
            width,
            height: 1,
            trans_step,
            rot_step: PI,
            scales: vec![1.0],
        }
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Self {
        self.scales = scales;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.mother.validate()?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if self.trans_step == 0 {
            return Err(Error::Config("trans_step must be positive".into()));
        }
        if !(self.rot_step > 0.0 && self.rot_step.is_finite()) {
            return Err(Error::Config(format!("rot_step must be positive, got {}", self.rot_step)));
        }
        if self.scales.is_empty() {
            return Err(Error::EmptyGrid("no scales".into()));
        }
        if self.scales[0] < 1.0 - 1e-12 || self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("scales must be ascending and >= 1: {:?}", self.scales)));
        }
        if !self.kind.has_scale() && self.scales.iter().any(|&s| (s - 1.0).abs() > 1e-12) {
            return Err(Error::Config(format!("group {} has no scale parameter", self.kind)));
        }
        if let MotherFunction::Box1D { len } = self.mother {
            if self.kind != GroupKind::Translation2D || self.height != 1 {
                return Err(Error::Config("box atoms require the translation group on a 1-pixel-high raster".into()));
            }
            if len > self.width {
                return Err(Error::Config(format!("box length {len} exceeds width {}", self.width)));
            }
        }
        Ok(())
    }

    /// Stabilizer used for the dictionary. For an isotropic Gaussian the rotation parameter is
    /// collapsed to zero instead, so the stabilizer is trivial.
    pub fn stabilizer(&self) -> Result<Stabilizer> {
        match self.mother {
            MotherFunction::GaussianAniso { .. } if self.mother.is_isotropic() => Ok(Stabilizer::trivial()),
            MotherFunction::GaussianAniso { nu } => stabilizer_of_gaussian(nu, self.kind),
            MotherFunction::Box1D { .. } => Ok(Stabilizer::trivial()),
        }
    }

    pub fn rotation_samples(&self) -> Result<Vec<f64>> {
        if !self.kind.has_rotation() || self.mother.is_isotropic() {
            return Ok(vec![0.0]);
        }
        let period = self.stabilizer()?.rotation_period();
        let n = ((period / self.rot_step) - 1e-9).ceil().max(1.0) as usize;
        Ok((0..n).map(|k| k as f64 * self.rot_step).collect())
    }

    /// Translation offsets along each axis.
    pub fn translation_samples(&self) -> (Vec<usize>, Vec<usize>) {
        let xmax = match self.mother {
            MotherFunction::Box1D { len } => self.width - len + 1,
            _ => self.width,
        };
        let xs = (0..xmax).step_by(self.trans_step).collect();
        let ys = (0..self.height).step_by(self.trans_step).collect();
        (xs, ys)
    }

    /// Fraction of a centered atom's energy inside the domain, minimized over the rotation samples.
    pub fn centered_energy_fraction(&self, scale: f64) -> Result<f64> {
        let c = [(self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0];
        let mut worst = f64::INFINITY;
        let mut buf = vec![0.0; self.width * self.height];
        for theta in self.rotation_samples()? {
            buf.iter_mut().for_each(|v| *v = 0.0);
            let g = TransformParams::new(c[0], c[1], scale, theta);
            let e = render_atom_into(&mut buf, self.width, self.height, &self.mother, &g, 1.0);
            worst = worst.min(e);
        }
        Ok(worst)
    }

    /// Scales `2^{k·step}` for `k = 0, 1, ...` while the centered-energy rule holds and `s ≤ max`.
    pub fn octave_scales(&self, step_octaves: f64, max: f64) -> Result<Vec<f64>> {
        if !self.kind.has_scale() {
            return Ok(vec![1.0]);
        }
        if !(step_octaves > 0.0) {
            return Err(Error::Config(format!("scale_octaves must be positive, got {step_octaves}")));
        }
        let mut out = Vec::new();
        for k in 0..64 {
            let s = (k as f64 * step_octaves).exp2();
            if s > max * (1.0 + 1e-12) || self.centered_energy_fraction(s)? < MIN_CENTERED_ENERGY {
                break;
            }
            out.push(s);
        }
        if out.is_empty() {
            return Err(Error::EmptyGrid("even the unit scale leaves the domain".into()));
        }
        Ok(out)
    }

    /// Reads the documented keys: `group`, `mother`, `nu`, `box_len`, `rot_step`,
    /// `scale_octaves`, `scale_max`, `scales`, `trans_step`, `width`, `height`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let kind: GroupKind = kv.parsed("group")?.unwrap_or(GroupKind::Similarity2D);
        let width: usize = kv.parsed("width")?.ok_or_else(|| Error::Config("missing key 'width'".into()))?;
        let height: usize = kv.parsed("height")?.unwrap_or(width);
        let mother = match kv.get("mother").unwrap_or("gaussian") {
            "gaussian" => MotherFunction::gaussian(kv.real("nu")?.unwrap_or(4.0)),
            "box" => MotherFunction::Box1D {
                len: kv.parsed("box_len")?.ok_or_else(|| Error::Config("missing key 'box_len'".into()))?,
            },
            other => return Err(Error::Config(format!("unknown mother function '{other}'"))),
        };
        let mut cfg = Self {
            kind,
            mother,
            width,
            height,
            trans_step: kv.parsed("trans_step")?.unwrap_or(1),
            rot_step: kv.real("rot_step")?.unwrap_or(PI / 8.0),
            scales: vec![1.0],
        };
        cfg.mother.validate()?;
        if let Some(explicit) = kv.reals("scales")? {
            cfg.scales = explicit;
            cfg.validate()?;
            cfg.drop_escaping_scales()?;
        } else {
            let step = kv.real("scale_octaves")?.unwrap_or(0.5);
            let max = kv.real("scale_max")?.unwrap_or(f64::INFINITY);
            cfg.validate()?;
            cfg.scales = cfg.octave_scales(step, max)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("group", self.kind);
        match self.mother {
            MotherFunction::GaussianAniso { nu } => {
                kv.set("mother", "gaussian");
                kv.set("nu", nu);
            }
            MotherFunction::Box1D { len } => {
                kv.set("mother", "box");
                kv.set("box_len", len);
            }
        }
        kv.set("width", self.width);
        kv.set("height", self.height);
        kv.set("trans_step", self.trans_step);
        kv.set("rot_step", self.rot_step);
        kv.set(
            "scales",
            self.scales.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "),
        );
        kv
    }

    /// Removes scales whose centered atom keeps less than 99% of its energy in the domain.
    pub fn drop_escaping_scales(&mut self) -> Result<()> {
        let mut kept = Vec::with_capacity(self.scales.len());
        for &s in &self.scales {
            let frac = self.centered_energy_fraction(s)?;
            if frac < MIN_CENTERED_ENERGY {
                log::warn!(
                    "scale {s} dropped: a centered atom keeps only {:.2}% of its energy in the {}x{} domain",
                    100.0 * frac,
                    self.width,
                    self.height
                );
            } else {
                kept.push(s);
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyGrid("every scale leaves the domain".into()));
        }
        self.scales = kept;
        Ok(())
    }
}

/// A rasterized atom. `raster` has unit norm when the atom lies inside the domain;
/// `energy` is its in-domain squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub gamma: TransformParams,
    pub raster: Image,
    pub energy: f64,
}

/// Visits every lattice sample of the unnormalized atom inside its truncation region and inside
/// the clip window `[x0, x1) × [y0, y1)`, calling `f(x, y, value)`.
fn for_each_sample(
    mother: &MotherFunction,
    g: &TransformParams,
    clip: (i64, i64, i64, i64),
    mut f: impl FnMut(i64, i64, f64),
) {
    let (cx0, cx1, cy0, cy1) = clip;
    let bxi = g.b[0].floor();
    let byi = g.b[1].floor();
    let fx = g.b[0] - bxi;
    let fy = g.b[1] - byi;
    match *mother {
        MotherFunction::Box1D { len } => {
            let y = byi as i64 + if fy > 0.5 { 1 } else { 0 };
            if y < cy0 || y >= cy1 {
                return;
            }
            let lo = bxi as i64 + fx.ceil() as i64;
            let hi = bxi as i64 + (fx + len as f64).ceil() as i64;
            for x in lo.max(cx0)..hi.min(cx1) {
                f(x, y, 1.0);
            }
        }
        MotherFunction::GaussianAniso { nu } => {
            let a = g.a;
            let (s, c) = g.theta.sin_cos();
            let up = TRUNCATION * nu * a + EDGE_SLACK;
            let vp = TRUNCATION * a + EDGE_SLACK;
            let ey = up * s.abs() + vp * c.abs();
            let ylo = (byi as i64 + (fy - ey).ceil() as i64).max(cy0);
            let yhi = (byi as i64 + (fy + ey).floor() as i64).min(cy1 - 1);
            let inv_nu2 = 1.0 / (nu * nu);
            let du = c / a;
            let dv = -s / a;
            let ddq = 2.0 * (du * du * inv_nu2 + dv * dv);
            let k = (-ddq).exp();
            for y in ylo..=yhi {
                let dy = y as f64 - g.b[1];
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                // |c dx + s dy| ≤ up and |-s dx + c dy| ≤ vp
                for (kk, m, r) in [(c, s * dy, up), (-s, c * dy, vp)] {
                    if kk.abs() < 1e-12 {
                        if m.abs() > r {
                            lo = f64::INFINITY;
                        }
                    } else {
                        let p = (-r - m) / kk;
                        let q = (r - m) / kk;
                        lo = lo.max(p.min(q));
                        hi = hi.min(p.max(q));
                    }
                }
                if !(lo <= hi) {
                    continue;
                }
                // the recurrence always starts at the unclipped row start so that clipped and
                // unclipped renderings produce bit-identical samples
                let xlo = bxi as i64 + (fx + lo).ceil() as i64;
                let xhi = (bxi as i64 + (fx + hi).floor() as i64).min(cx1 - 1);
                if xlo.max(cx0) > xhi {
                    continue;
                }
                let dx = xlo as f64 - g.b[0];
                let u = (c * dx + s * dy) / a;
                let v = (-s * dx + c * dy) / a;
                let mut e = (-(u * u * inv_nu2 + v * v)).exp();
                let dq = (2.0 * u * du + du * du) * inv_nu2 + 2.0 * v * dv + dv * dv;
                let mut m = (-dq).exp();
                for x in xlo..=xhi {
                    if x >= cx0 {
                        f(x, y, e);
                    }
                    e *= m;
                    m *= k;
                }
            }
        }
    }
}

const NO_CLIP: (i64, i64, i64, i64) = (i64::MIN / 4, i64::MAX / 4, i64::MIN / 4, i64::MAX / 4);

/// Lattice sample count above which the energy sum is replaced by its continuous limit.
const SUMMED_SAMPLES: f64 = 1e5;

/// Squared norm of the unclipped lattice samples of the unnormalized atom.
pub(crate) fn unclipped_energy(mother: &MotherFunction, g: &TransformParams) -> f64 {
    if let MotherFunction::GaussianAniso { nu } = *mother {
        // at this size the lattice sum equals (π/2)·ν·a² to rounding, and summing would cost O(a²)
        let samples = 4.0 * TRUNCATION * TRUNCATION * nu * g.a * g.a;
        if samples > SUMMED_SAMPLES {
            return PI / 2.0 * nu * g.a * g.a;
        }
    }
    let mut e = 0.0;
    for_each_sample(mother, g, NO_CLIP, |_, _, v| e += v * v);
    e
}

/// Adds `coef · φ_γ` to a raster whose pixel `(i, j)` sits at plane coordinates `(i + x0, j + y0)`.
/// Returns the squared norm of the normalized atom restricted to the raster.
pub(crate) fn render_into_canvas(
    buf: &mut [f64],
    canvas: (i64, i64, usize, usize),
    mother: &MotherFunction,
    g: &TransformParams,
    coef: f64,
) -> f64 {
    let (x0, y0, w, h) = canvas;
    let total = unclipped_energy(mother, g);
    if total <= 0.0 {
        return 0.0;
    }
    let scale = 1.0 / total.sqrt();
    let mut inside = 0.0;
    for_each_sample(mother, g, (x0, x0 + w as i64, y0, y0 + h as i64), |x, y, v| {
        let val = v * scale;
        inside += val * val;
        buf[(y - y0) as usize * w + (x - x0) as usize] += coef * val;
    });
    inside
}

/// Adds `coef · φ_γ` into a `w × h` raster and returns the atom's in-domain energy.
pub fn render_atom_into(buf: &mut [f64], w: usize, h: usize, mother: &MotherFunction, g: &TransformParams, coef: f64) -> f64 {
    render_into_canvas(buf, (0, 0, w, h), mother, g, coef)
}

/// In-domain energy of `φ_γ` without materializing it.
pub fn atom_energy(cfg: &DictionaryConfig, g: &TransformParams) -> f64 {
    let total = unclipped_energy(&cfg.mother, g);
    if total <= 0.0 {
        return 0.0;
    }
    let mut inside = 0.0;
    for_each_sample(&cfg.mother, g, (0, cfg.width as i64, 0, cfg.height as i64), |_, _, v| inside += v * v);
    inside / total
}

pub fn rasterize_atom(gamma: &TransformParams, cfg: &DictionaryConfig) -> Result<Atom> {
    gamma.validate(cfg.kind)?;
    let mut buf = vec![0.0; cfg.width * cfg.height];
    let energy = render_atom_into(&mut buf, cfg.width, cfg.height, &cfg.mother, gamma, 1.0);
    if energy < MIN_ATOM_ENERGY {
        return Err(Error::AtomEscapesDomain(format!("{gamma} keeps energy {energy:e}")));
    }
    Ok(Atom {
        gamma: *gamma,
        raster: Image::from_vec(cfg.width, cfg.height, buf)?,
        energy,
    })
}

/// Cartesian product of translations × rotations × scales, one representative per
/// stabilizer coset.
pub fn build_discretization(cfg: &DictionaryConfig) -> Result<Vec<TransformParams>> {
    cfg.validate()?;
    let stab = cfg.stabilizer()?;
    let (xs, ys) = cfg.translation_samples();
    let thetas = cfg.rotation_samples()?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(xs.len() * ys.len() * thetas.len() * cfg.scales.len());
    for &a in &cfg.scales {
        for &theta in &thetas {
            // the translation part never changes the coset, so checking the shape is enough
            let rep = stab.canonical(&TransformParams::new(0.0, 0.0, a, theta));
            let key = ((rep.a * 1e9).round() as i64, (rep.theta * 1e9).round() as i64);
            if !seen.insert(key) {
                continue;
            }
            for &y in &ys {
                for &x in &xs {
                    out.push(TransformParams::new(x as f64, y as f64, a, theta));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyGrid("dictionary has no atoms".into()));
    }
    Ok(out)
}

/// Largest absolute inner product between distinct atoms.
pub fn coherence(atoms: &[Atom]) -> Result<f64> {
    if atoms.len() < 2 {
        return Err(Error::invalid("coherence needs at least two atoms"));
    }
    let mut best: f64 = 0.0;
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            atoms[i].raster.same_shape(&atoms[j].raster)?;
            let ip = dot(atoms[i].raster.pixels(), atoms[j].raster.pixels());
            best = best.max(ip.abs());
        }
    }
    Ok(best)
}

/// One `(scale, θ)` slice of the dictionary: a kernel shared by all its translations.
pub(crate) struct Shape {
    pub a: f64,
    pub theta: f64,
    /// Kernel samples for offsets `d ∈ [-ox, kw-ox) × [-oy, kh-oy)`.
    pub kernel: Vec<f64>,
    pub kw: usize,
    pub kh: usize,
    pub ox: i64,
    pub oy: i64,
    /// Conjugated spectrum of the wrapped kernel on the padded grid.
    pub spectrum: Vec<Complex64>,
    /// In-domain energy of the atom at every integer translation of the domain.
    pub energy: Vec<f64>,
}

/// A built dictionary: its configuration, discretization and correlation kernels.
pub struct Dictionary {
    cfg: DictionaryConfig,
    stabilizer: Stabilizer,
    params: Vec<TransformParams>,
    pub(crate) shapes: Vec<Shape>,
    pub(crate) fft: Fft2,
    pub(crate) grid_x: Vec<usize>,
    pub(crate) grid_y: Vec<usize>,
}

impl fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dictionary")
            .field("cfg", &self.cfg)
            .field("atoms", &self.params.len())
            .field("shapes", &self.shapes.len())
            .finish()
    }
}

impl Dictionary {
    pub fn new(cfg: DictionaryConfig) -> Result<Self> {
        let params = build_discretization(&cfg)?;
        let stabilizer = cfg.stabilizer()?;
        let (grid_x, grid_y) = cfg.translation_samples();
        let (w, h) = (cfg.width as i64, cfg.height as i64);

        let mut raw = Vec::new();
        let mut reach_x = 0i64;
        let mut reach_y = 0i64;
        let mut seen = std::collections::HashSet::new();
        for g in params.iter() {
            let key = ((g.a * 1e9).round() as i64, (g.theta * 1e9).round() as i64);
            if !seen.insert(key) {
                continue;
            }
            let centered = TransformParams::new(0.0, 0.0, g.a, g.theta);
            let (mut xmin, mut xmax, mut ymin, mut ymax) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
            for_each_sample(&cfg.mother, &centered, NO_CLIP, |x, y, _| {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            });
            // offsets beyond the domain size can never meet a pixel
            xmin = xmin.max(-(w - 1));
            xmax = xmax.min(w - 1);
            ymin = ymin.max(-(h - 1));
            ymax = ymax.min(h - 1);
            reach_x = reach_x.max(-xmin).max(xmax);
            reach_y = reach_y.max(-ymin).max(ymax);
            let kw = (xmax - xmin + 1) as usize;
            let kh = (ymax - ymin + 1) as usize;
            let mut kernel = vec![0.0; kw * kh];
            render_into_canvas(&mut kernel, (xmin, ymin, kw, kh), &cfg.mother, &centered, 1.0);
            raw.push((g.a, g.theta, kernel, kw, kh, -xmin, -ymin));
        }

        let mw = smooth_size(cfg.width + reach_x as usize);
        let mh = smooth_size(cfg.height + reach_y as usize);
        let fft = Fft2::new(mw, mh);
        let mut scratch = Vec::new();
        let shapes = raw
            .into_iter()
            .map(|(a, theta, kernel, kw, kh, ox, oy)| {
                let mut spec = vec![Complex64::new(0.0, 0.0); mw * mh];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let dx = (kx as i64 - ox).rem_euclid(mw as i64) as usize;
                        let dy = (ky as i64 - oy).rem_euclid(mh as i64) as usize;
                        spec[dy * mw + dx].re += kernel[ky * kw + kx];
                    }
                }
                fft.forward(&mut spec, &mut scratch);
                spec.iter_mut().for_each(|z| *z = z.conj());
                let energy = energy_map(&kernel, kw, kh, ox, oy, cfg.width, cfg.height);
                Shape {
                    a,
                    theta,
                    kernel,
                    kw,
                    kh,
                    ox,
                    oy,
                    spectrum: spec,
                    energy,
                }
            })
            .collect();

        Ok(Self {
            cfg,
            stabilizer,
            params,
            shapes,
            fft,
            grid_x,
            grid_y,
        })
    }

    pub fn config(&self) -> &DictionaryConfig {
        &self.cfg
    }

    pub fn stabilizer(&self) -> &Stabilizer {
        &self.stabilizer
    }

    /// The discretization `T_d`.
    pub fn params(&self) -> &[TransformParams] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn atom(&self, index: usize) -> Result<Atom> {
        rasterize_atom(&self.params[index], &self.cfg)
    }

    /// Materializes every atom; intended for small dictionaries.
    pub fn atoms(&self) -> Result<Vec<Atom>> {
        (0..self.len()).map(|i| self.atom(i)).collect()
    }
}

/// `E(b) = Σ_{x ∈ domain} k(x − b)²` for every integer `b` in the domain, by 2-D prefix sums.
fn energy_map(kernel: &[f64], kw: usize, kh: usize, ox: i64, oy: i64, w: usize, h: usize) -> Vec<f64> {
    let mut prefix = vec![0.0; (kw + 1) * (kh + 1)];
    for ky in 0..kh {
        let mut row = 0.0;
        for kx in 0..kw {
            let v = kernel[ky * kw + kx];
            row += v * v;
            prefix[(ky + 1) * (kw + 1) + kx + 1] = prefix[ky * (kw + 1) + kx + 1] + row;
        }
    }
    let rect = |x0: i64, x1: i64, y0: i64, y1: i64| -> f64 {
        // kernel indices [x0, x1) × [y0, y1), clamped
        let x0 = x0.clamp(0, kw as i64) as usize;
        let x1 = x1.clamp(0, kw as i64) as usize;
        let y0 = y0.clamp(0, kh as i64) as usize;
        let y1 = y1.clamp(0, kh as i64) as usize;
        if x0 >= x1 || y0 >= y1 {
            return 0.0;
        }
        let s = kw + 1;
        prefix[y1 * s + x1] - prefix[y0 * s + x1] - prefix[y1 * s + x0] + prefix[y0 * s + x0]
    };
    let mut out = vec![0.0; w * h];
    for by in 0..h as i64 {
        for bx in 0..w as i64 {
            // offsets d with 0 ≤ b + d < size, i.e. kernel index d + o in [o - b, o - b + size)
            out[by as usize * w + bx as usize] =
                rect(ox - bx, ox - bx + w as i64, oy - by, oy - by + h as i64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{inner_product, l2_norm, warp, l2_distance};
    use std::f64::consts::FRAC_PI_4;

    fn sim(w: usize) -> DictionaryConfig {
        DictionaryConfig::gaussian(GroupKind::Similarity2D, 4.0, w, w).unwrap()
    }

    #[test]
    fn default_scales_follow_energy_rule() {
        let cfg = sim(75);
        assert_eq!(cfg.scales[0], 1.0);
        for w in cfg.scales.windows(2) {
            assert!((w[1] / w[0] - SQRT_2).abs() < 1e-12);
        }
        let last = *cfg.scales.last().unwrap();
        assert!(cfg.centered_energy_fraction(last).unwrap() >= MIN_CENTERED_ENERGY);
        assert!(cfg.centered_energy_fraction(last * SQRT_2).unwrap() < MIN_CENTERED_ENERGY);
    }

    #[test]
    fn rotation_count_over_half_turn() {
        let cfg = sim(75).with_scales(vec![1.0, SQRT_2, 2.0]);
        assert_eq!(cfg.rotation_samples().unwrap().len(), 8);
        let params = build_discretization(&cfg).unwrap();
        assert_eq!(params.len(), 75 * 75 * 8 * 3);
        let iso = DictionaryConfig::gaussian(GroupKind::Similarity2D, 1.0, 20, 20).unwrap();
        assert_eq!(iso.rotation_samples().unwrap(), vec![0.0]);
    }

    #[test]
    fn translation_grid_size() {
        let cfg = DictionaryConfig::gaussian(GroupKind::Translation2D, 4.0, 10, 10).unwrap();
        assert_eq!(build_discretization(&cfg).unwrap().len(), 100);
    }

    #[test]
    fn explicit_escaping_scale_is_dropped() {
        let kv = KeyValues::parse("group = sim2\nwidth = 28\nnu = 4\nscales = 1, 2, 16").unwrap();
        let cfg = DictionaryConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.scales, vec![1.0, 2.0]);
    }

    #[test]
    fn config_round_trip() {
        let cfg = sim(28);
        let back = DictionaryConfig::from_key_values(&cfg.to_key_values()).unwrap();
        assert_eq!(back.kind, cfg.kind);
        assert_eq!(back.mother, cfg.mother);
        assert_eq!(back.scales.len(), cfg.scales.len());
        assert!(DictionaryConfig::from_key_values(&KeyValues::parse("group = affine\nwidth = 9").unwrap()).is_err());
        assert!(DictionaryConfig::from_key_values(&KeyValues::parse("group = sim2").unwrap()).is_err());
    }

    #[test]
    fn atoms_are_unit_norm_and_nonnegative() {
        let cfg = sim(64);
        for g in [
            TransformParams::new(20.0, 20.0, 1.0, 0.0),
            TransformParams::new(31.3, 30.7, 2.0, 1.1),
            TransformParams::new(20.0, 20.0, SQRT_2, FRAC_PI_4),
        ] {
            let atom = rasterize_atom(&g, &cfg).unwrap();
            assert!((l2_norm(&atom.raster) - 1.0).abs() < 1e-9);
            assert!((inner_product(&atom.raster, &atom.raster).unwrap() - 1.0).abs() < 1e-9);
            assert!(atom.raster.pixels().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn recurrence_matches_closed_form() {
        let cfg = sim(40);
        let g = TransformParams::new(18.4, 21.2, 1.7, 0.9);
        let atom = rasterize_atom(&g, &cfg).unwrap();
        let (s, c) = g.theta.sin_cos();
        let direct = Image::from_fn(40, 40, |x, y| {
            let dx = x as f64 - g.b[0];
            let dy = y as f64 - g.b[1];
            let u = (c * dx + s * dy) / g.a;
            let v = (-s * dx + c * dy) / g.a;
            if u.abs() <= TRUNCATION * 4.0 && v.abs() <= TRUNCATION {
                (-(u / 4.0).powi(2) - v * v).exp()
            } else {
                0.0
            }
        });
        let n = l2_norm(&direct);
        for (p, q) in atom.raster.pixels().iter().zip(direct.pixels()) {
            assert!((p - q / n).abs() < 1e-12);
        }
    }

    #[test]
    fn large_atom_energy_is_continuous_at_the_switch() {
        let mother = MotherFunction::gaussian(4.0);
        let g = |a: f64| TransformParams::new(3.3, -1.7, a, 0.4);
        let below = 0.999 * (SUMMED_SAMPLES / (4.0 * TRUNCATION * TRUNCATION * 4.0)).sqrt();
        let summed = unclipped_energy(&mother, &g(below));
        assert!((summed / (PI / 2.0 * 4.0 * below * below) - 1.0).abs() < 1e-9);
        let huge = unclipped_energy(&mother, &g(1e6));
        assert!((huge / (PI / 2.0 * 4.0 * 1e12) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_turn_gives_identical_raster() {
        let cfg = sim(33);
        let a = rasterize_atom(&TransformParams::new(16.0, 16.0, 1.0, 0.0), &cfg).unwrap();
        let b = rasterize_atom(&TransformParams::new(16.0, 16.0, 1.0, PI), &cfg).unwrap();
        assert!(l2_distance(&a.raster, &b.raster).unwrap() < 1e-12);
    }

    #[test]
    fn escaping_atom_errors() {
        let cfg = sim(20);
        let err = rasterize_atom(&TransformParams::new(200.0, 5.0, 1.0, 0.0), &cfg);
        assert!(matches!(err, Err(Error::AtomEscapesDomain(_))));
        let clipped = rasterize_atom(&TransformParams::new(0.0, 10.0, 1.0, 0.0), &cfg).unwrap();
        assert!(clipped.energy > 0.45 && clipped.energy < 0.6, "{}", clipped.energy);
    }

    #[test]
    fn covariance_against_warp() {
        // bilinear interpolation cannot follow the sub-pixel minor axis of unit-scale atoms,
        // so the 5% bound is checked from scale 2 on and the error must shrink with scale
        let cfg = sim(64);
        let mut previous = f64::INFINITY;
        for a in [1.0, SQRT_2, 2.0, 2.0 * SQRT_2] {
            let mut worst: f64 = 0.0;
            for eta in [
                TransformParams::new(3.0, -2.0, 1.2, 0.7),
                TransformParams::new(-1.3, 2.6, 0.9, 2.0),
                TransformParams::new(0.5, 0.5, 1.0, 0.3),
            ] {
                let gamma = TransformParams::new(30.0, 33.0, a, 0.4);
                let eta_c = crate::geometry::about_center(&eta, [31.5, 31.5]);
                let analytic = rasterize_atom(&crate::geometry::compose_unchecked(&eta_c, &gamma), &cfg).unwrap();
                let warped = warp(&rasterize_atom(&gamma, &cfg).unwrap().raster, &eta_c, GroupKind::Similarity2D).unwrap();
                worst = worst.max(l2_distance(&analytic.raster, &warped).unwrap());
            }
            assert!(worst < previous);
            if a >= 2.0 {
                assert!(worst <= 0.05, "scale {a}: discrepancy {worst}");
            }
            previous = worst;
        }
    }

    #[test]
    fn box_coherence() {
        let cfg = DictionaryConfig::box1d(4, 16, 1);
        let dict = Dictionary::new(cfg).unwrap();
        let atoms = dict.atoms().unwrap();
        assert_eq!(atoms.len(), 13);
        assert!((coherence(&atoms).unwrap() - 0.75).abs() < 1e-12);
        let far = [atoms[0].clone(), atoms[8].clone()];
        assert_eq!(coherence(&far).unwrap(), 0.0);
        assert!(coherence(&atoms[..1]).is_err());
        let fine = Dictionary::new(DictionaryConfig::box1d(64, 128, 1)).unwrap().atoms().unwrap();
        assert!(coherence(&fine[..3]).unwrap() > 0.98);
    }

    #[test]
    fn kernels_match_rasterized_atoms() {
        let cfg = sim(24).with_scales(vec![1.0, 2.0]);
        let dict = Dictionary::new(cfg.clone()).unwrap();
        for shape in &dict.shapes {
            for (bx, by) in [(0usize, 0usize), (11, 5), (23, 23)] {
                let atom = rasterize_atom(&TransformParams::new(bx as f64, by as f64, shape.a, shape.theta), &cfg).unwrap();
                let mut placed = Image::zeros(24, 24);
                for ky in 0..shape.kh {
                    for kx in 0..shape.kw {
                        let x = bx as i64 + kx as i64 - shape.ox;
                        let y = by as i64 + ky as i64 - shape.oy;
                        if (0..24).contains(&x) && (0..24).contains(&y) {
                            placed.set(x as usize, y as usize, shape.kernel[ky * shape.kw + kx]);
                        }
                    }
                }
                assert_eq!(placed, atom.raster);
                assert!((shape.energy[by * 24 + bx] - atom.energy).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_atom_per_coset() {
        let cfg = sim(12).with_scales(vec![1.0, SQRT_2]);
        let params = build_discretization(&cfg).unwrap();
        let stab = cfg.stabilizer().unwrap();
        for (i, x) in params.iter().enumerate().step_by(97) {
            for y in params.iter().skip(i + 1) {
                assert!(!stab.same_coset(x, y, 1e-9));
            }
        }
    }
}
