//! Experiment specifications and drivers. Every driver returns a [`Table`] whose CSV bytes depend
//! only on the specification.

use std::collections::BTreeSet;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use super::stats::{mean, spearman};
use super::synth::{add_clutter, ball_field, ball_field_scaled, ball_pair, synth_transformed, synthetic_object, TransformRanges};
use crate::baselines::{euclidean_distance, gd_distance, tangent_distance};
use crate::config::KeyValues;
use crate::dictionary::{Dictionary, DictionaryConfig, MotherFunction};
use crate::error::{Error, Result};
use crate::geometry::{relative_to_center, GroupKind, TransformParams};
use crate::imaging::{l2_distance, l2_norm, load_pgm, warp, warp_about_center, Image};
use crate::registration::{register, transformation_error, RefinementConfig};
use crate::sparse::{nmp, NmpOutput, SparseApprox};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    AnisoSweep,
    ScaleStepSweep,
    TransformErrors,
    DistanceCompare,
    Classify,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::AnisoSweep,
        ExperimentId::ScaleStepSweep,
        ExperimentId::TransformErrors,
        ExperimentId::DistanceCompare,
        ExperimentId::Classify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::AnisoSweep => "aniso_sweep",
            ExperimentId::ScaleStepSweep => "scale_step_sweep",
            ExperimentId::TransformErrors => "transform_errors",
            ExperimentId::DistanceCompare => "distance_compare",
            ExperimentId::Classify => "classify",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Everything an experiment run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    /// Directory with `train-images-idx3-ubyte`/`train-labels-idx1-ubyte` style files.
    pub data_dir: Option<PathBuf>,
    /// PGM test objects replacing the procedural ones.
    pub images: Vec<PathBuf>,
    pub dictionary: DictionaryConfig,
    pub k: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub ranges: TransformRanges,
    /// Anisotropies for `aniso_sweep`, scale steps for `scale_step_sweep`.
    pub sweep: Vec<f64>,
    /// Use the refined transformation for the proposed distance.
    pub refine: bool,
    pub rotation: f64,
    pub dilation: f64,
    /// Amplitude of the independent background specks added to each image of a sweep pair.
    pub clutter: f64,
    pub classes: Vec<u8>,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl ExperimentSpec {
    /// Desk-scale defaults.
    pub fn new(id: ExperimentId) -> Result<Self> {
        let base = |kind, nu, size| DictionaryConfig::gaussian(kind, nu, size, size);
        let mut spec = Self {
            id,
            data_dir: None,
            images: Vec::new(),
            dictionary: base(GroupKind::Similarity2D, 4.0, 75)?,
            k: vec![10],
            trials: 30,
            seed: 1,
            ranges: TransformRanges::similarity(18.0, 0.5, 1.5),
            sweep: Vec::new(),
            refine: true,
            rotation: PI / 4.0,
            dilation: 1.3,
            clutter: 0.15,
            classes: (0..=5).collect(),
            train_per_class: 20,
            test_per_class: 20,
        };
        match id {
            ExperimentId::AnisoSweep => {
                spec.dictionary = base(GroupKind::Similarity2D, 4.0, 64)?.with_scales(vec![2.0 * SQRT_2]);
                spec.k = vec![3];
                spec.sweep = vec![1.2, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0];
                spec.refine = false;
            }
            ExperimentId::ScaleStepSweep => {
                spec.dictionary = base(GroupKind::Similarity2D, 1.0, 64)?.with_scales(vec![1.0, 7.0]);
                spec.k = vec![3];
                spec.sweep = vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 6.0];
                spec.refine = false;
            }
            ExperimentId::TransformErrors => {
                spec.k = vec![1, 2, 3, 4, 6, 8, 10, 12, 15];
            }
            ExperimentId::DistanceCompare => {}
            ExperimentId::Classify => {
                spec.dictionary = base(GroupKind::Similarity2D, 4.0, 28)?;
                spec.ranges = TransformRanges::similarity(3.0, 0.8, 1.2);
            }
        }
        Ok(spec)
    }

    /// Defaults for `experiment`, overridden by any of the keys `data_dir`, `images`, `k`,
    /// `trials`, `seed`, `max_translation`, `transform_scale_min`, `transform_scale_max`, `max_rotation`, `sweep`,
    /// `refine`, `rotation`, `dilation`, `clutter`, `classes`, `train_per_class`, `test_per_class`, and the
    /// dictionary keys.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let id: ExperimentId = kv.parsed("experiment")?.ok_or_else(|| Error::Config("missing key 'experiment'".into()))?;
        let mut spec = Self::new(id)?;
        const DICT_KEYS: [&str; 11] =
            ["group", "mother", "nu", "box_len", "rot_step", "scale_octaves", "scale_max", "scales", "trans_step", "width", "height"];
        if DICT_KEYS.iter().any(|k| kv.contains(k)) {
            let mut merged = spec.dictionary.to_key_values();
            if kv.contains("scale_octaves") || kv.contains("scale_max") || kv.contains("width") || kv.contains("height") {
                merged.remove("scales");
            }
            if kv.contains("width") && !kv.contains("height") {
                merged.set("height", kv.get("width").unwrap_or_default());
            }
            merged.merge(kv);
            spec.dictionary = DictionaryConfig::from_key_values(&merged)?;
        }
        if let Some(d) = kv.get("data_dir") {
            spec.data_dir = Some(PathBuf::from(d));
        }
        if let Some(list) = kv.get("images") {
            spec.images = list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect();
        }
        if let Some(ks) = kv.get("k") {
            spec.k = ks
                .split([',', ' '])
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map_err(|_| Error::Config(format!("invalid K '{t}'"))))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = kv.parsed("trials")? {
            spec.trials = v;
        }
        if let Some(v) = kv.parsed("seed")? {
            spec.seed = v;
        }
        if let Some(v) = kv.real("max_translation")? {
            spec.ranges.max_translation = v;
        }
        if let Some(v) = kv.real("transform_scale_min")? {
            spec.ranges.scale_min = v;
        }
        if let Some(v) = kv.real("transform_scale_max")? {
            spec.ranges.scale_max = v;
        }
        if let Some(v) = kv.real("max_rotation")? {
            spec.ranges.max_rotation = v;
        }
        if let Some(v) = kv.reals("sweep")? {
            spec.sweep = v;
        }
        if let Some(v) = kv.parsed("refine")? {
            spec.refine = v;
        }
        if let Some(v) = kv.real("rotation")? {
            spec.rotation = v;
        }
        if let Some(v) = kv.real("dilation")? {
            spec.dilation = v;
        }
        if let Some(v) = kv.real("clutter")? {
            spec.clutter = v;
        }
        if let Some(list) = kv.get("classes") {
            spec.classes = list
                .split([',', ' '])
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map_err(|_| Error::Config(format!("invalid class '{t}'"))))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = kv.parsed("train_per_class")? {
            spec.train_per_class = v;
        }
        if let Some(v) = kv.parsed("test_per_class")? {
            spec.test_per_class = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.dictionary.validate()?;
        if self.trials < 1 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(Error::Config(format!("sparsity values must be positive, got {:?}", self.k)));
        }
        let sweep = matches!(self.id, ExperimentId::AnisoSweep | ExperimentId::ScaleStepSweep);
        // the sweeps use fixed transformations instead of random ones
        if !sweep {
            self.ranges.validate(self.dictionary.width, self.dictionary.height)?;
        }
        if sweep {
            if self.sweep.is_empty() {
                return Err(Error::Config("empty sweep".into()));
            }
            if self.sweep.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("sweep values must be positive, got {:?}", self.sweep)));
            }
        }
        if !(self.clutter >= 0.0 && self.clutter.is_finite()) {
            return Err(Error::Config(format!("clutter amplitude must be nonnegative, got {}", self.clutter)));
        }
        if self.id == ExperimentId::AnisoSweep && self.sweep.iter().any(|&nu| nu < 1.0) {
            return Err(Error::Config("anisotropy must be at least 1".into()));
        }
        if self.id == ExperimentId::Classify && (self.classes.is_empty() || self.train_per_class == 0 || self.test_per_class == 0) {
            return Err(Error::Config("classification needs classes and nonempty train/test sets".into()));
        }
        Ok(())
    }

    fn with_mother(&self, nu: f64) -> DictionaryConfig {
        DictionaryConfig { mother: MotherFunction::gaussian(nu), ..self.dictionary.clone() }
    }
}

/// A result table. `to_csv` writes a schema line, the header, then the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub experiment: ExperimentId,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(experiment: ExperimentId, header: &[&str]) -> Self {
        Self { experiment, header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn schema_line(&self) -> String {
        format!("# schema: sparsereg.{} v{CSV_SCHEMA_VERSION}", self.experiment)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
        format!("{}\n{body}", self.schema_line())
    }

    /// Values of a numeric column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[i].parse().ok()).collect()
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn decompose(img: &Image, k: usize, dict: &Dictionary) -> Result<NmpOutput> {
    nmp(img, k, dict, 0.0)
}

/// `|‖U(η₀)I₁ − I₂‖ − ‖U(η̂)I₁ − I₂‖|` with `η̂` acting in pixel coordinates.
fn registration_error(i1: &Image, i2: &Image, eta0_centered: &TransformParams, eta_hat: &TransformParams, kind: GroupKind) -> Result<f64> {
    let best = l2_distance(&warp_about_center(i1, eta0_centered, kind)?, i2)?;
    let est = l2_distance(&warp(i1, eta_hat, kind)?, i2)?;
    Ok((best - est).abs())
}

/// Approximation and registration error of one image pair under one dictionary.
fn pair_errors(i1: &Image, i2: &Image, eta0: &TransformParams, k: usize, dict: &Dictionary, refine: bool) -> Result<(f64, f64)> {
    let p = decompose(i1, k, dict)?;
    let q = decompose(i2, k, dict)?;
    let approx = 0.5 * (l2_norm(&p.residual) + l2_norm(&q.residual));
    let res = register(&p.approx, &q.approx, refine, &RefinementConfig::default())?;
    let eta = if refine { res.eta_refined } else { res.eta_hat };
    let reg = registration_error(i1, i2, eta0, &eta, GroupKind::Similarity2D)?;
    Ok((approx, reg))
}

/// `(I₁, I₂)` with `I₂` the warp of `clean` about the center, each then given its own clutter.
fn cluttered_pair(clean: &Image, eta0: &TransformParams, clutter: f64, seed: u64) -> Result<(Image, Image)> {
    let mut i2 = warp_about_center(clean, eta0, GroupKind::Similarity2D)?;
    let mut i1 = clean.clone();
    if clutter > 0.0 {
        add_clutter(&mut i1, clutter, seed.wrapping_mul(2).wrapping_add(0x5eed));
        add_clutter(&mut i2, clutter, seed.wrapping_mul(2).wrapping_add(0x5eee));
    }
    Ok((i1, i2))
}

fn sweep_table(spec: &ExperimentSpec, param: &str, rows: Vec<(f64, Vec<(f64, f64)>)>) -> Table {
    let mut t = Table::new(spec.id, &[param, "k", "trials", "approx_error", "registration_error"]);
    for (v, trials) in rows {
        let a: Vec<f64> = trials.iter().map(|x| x.0).collect();
        let r: Vec<f64> = trials.iter().map(|x| x.1).collect();
        t.push(vec![num(v), spec.k[0].to_string(), trials.len().to_string(), num(mean(&a)), num(mean(&r))]);
    }
    t
}

/// Approximation and registration errors as a function of the mother-function anisotropy, on
/// pairs of round balls related by a rotation about the image center, each image with its own
/// clutter.
pub fn run_aniso_sweep(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let size = spec.dictionary.width;
    let eta0 = TransformParams::rotation(spec.rotation);
    let pairs: Vec<(Image, Image)> = (0..spec.trials as u64)
        .map(|t| {
            let clean = ball_pair(size, spec.seed.wrapping_add(t));
            cluttered_pair(&clean, &eta0, spec.clutter, spec.seed.wrapping_add(t))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(spec.sweep.len());
    for &nu in &spec.sweep {
        let dict = Dictionary::new(spec.with_mother(nu))?;
        let trials = pairs
            .par_iter()
            .map(|(i1, i2)| pair_errors(i1, i2, &eta0, spec.k[0], &dict, spec.refine))
            .collect::<Result<Vec<_>>>()?;
        log::info!("aniso sweep: nu = {nu} done");
        rows.push((nu, trials));
    }
    Ok(sweep_table(spec, "nu", rows))
}

/// Linear scale grid `min, min + Δ, ...` up to `max`; `max` is appended when the steps miss it.
pub fn linear_scales(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && min >= 1.0 && max >= min) {
        return Err(Error::Config(format!("invalid scale grid {min}..{max} step {step}")));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|i| min + i as f64 * step).collect();
    if max - out[out.len() - 1] > 1e-9 {
        out.push(max);
    }
    Ok(out)
}

/// Approximation and registration errors as a function of the spacing of the (linear) scale grid
/// of an isotropic dictionary. Each pair holds the same field of balls, every ball dilated in place
/// by `spec.dilation` in the second image; the best global transformation is taken to be the
/// identity.
pub fn run_scale_step_sweep(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let size = spec.dictionary.width;
    let (min, max) = (spec.dictionary.scales[0], spec.dictionary.scales[spec.dictionary.scales.len() - 1]);
    let eta0 = TransformParams::identity();
    let pairs: Vec<(Image, Image)> = (0..spec.trials as u64)
        .map(|t| {
            let seed = spec.seed.wrapping_add(t);
            let mut i1 = ball_field(size, seed);
            let mut i2 = ball_field_scaled(size, seed, spec.dilation);
            if spec.clutter > 0.0 {
                add_clutter(&mut i1, spec.clutter, seed.wrapping_mul(2).wrapping_add(0x5eed));
                add_clutter(&mut i2, spec.clutter, seed.wrapping_mul(2).wrapping_add(0x5eee));
            }
            (i1, i2)
        })
        .collect();
    let mut rows = Vec::with_capacity(spec.sweep.len());
    for &step in &spec.sweep {
        let cfg = spec.dictionary.clone().with_scales(linear_scales(min, max, step)?);
        let dict = Dictionary::new(cfg)?;
        let trials = pairs
            .par_iter()
            .map(|(i1, i2)| pair_errors(i1, i2, &eta0, spec.k[0], &dict, spec.refine))
            .collect::<Result<Vec<_>>>()?;
        log::info!("scale step sweep: step = {step} done");
        rows.push((step, trials));
    }
    Ok(sweep_table(spec, "scale_step", rows))
}

/// Loads the user-supplied objects, or procedural stand-ins when none are given.
pub fn test_objects(spec: &ExperimentSpec, count: usize) -> Result<Vec<Image>> {
    let (w, h) = (spec.dictionary.width, spec.dictionary.height);
    if spec.images.is_empty() {
        if w != h {
            return Err(Error::Config("procedural objects are square".into()));
        }
        return Ok((0..count as u64).map(|i| synthetic_object(w, spec.seed.wrapping_add(i))).collect());
    }
    let imgs = spec.images.iter().map(load_pgm).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = imgs.iter().find(|i| i.width() != w || i.height() != h) {
        return Err(Error::Data(format!("object of size {}x{} does not match the {w}x{h} dictionary", bad.width(), bad.height())));
    }
    Ok(imgs)
}

/// Mean transformation errors at each sparsity, before and after refinement.
pub fn run_transform_errors(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let object = test_objects(spec, 1)?.remove(0);
    let dict = Dictionary::new(spec.dictionary.clone())?;
    let center = object.center();
    let transformed = synth_transformed(&object, spec.trials, &spec.ranges, spec.seed)?;
    let mut t = Table::new(
        spec.id,
        &["k", "trials", "translation", "scale", "rotation_deg", "translation_refined", "scale_refined", "rotation_deg_refined"],
    );
    for &k in &spec.k {
        let p = decompose(&object, k, &dict)?.approx;
        let errs = transformed
            .par_iter()
            .map(|(img, eta)| {
                let q = decompose(img, k, &dict)?.approx;
                let res = register(&p, &q, true, &RefinementConfig::default())?;
                let a = transformation_error(&relative_to_center(&res.eta_hat, center), eta);
                let b = transformation_error(&relative_to_center(&res.eta_refined, center), eta);
                Ok([a.0, a.1, a.2, b.0, b.1, b.2])
            })
            .collect::<Result<Vec<_>>>()?;
        let col = |j: usize| mean(&errs.iter().map(|e| e[j]).collect::<Vec<_>>());
        let mut row = vec![k.to_string(), errs.len().to_string()];
        row.extend((0..6).map(|j| num(col(j))));
        t.push(row);
        log::info!("transform errors: K = {k} done");
    }
    Ok(t)
}

/// Distance methods compared by `distance_compare` and `classify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euclidean,
    Tangent,
    GradientDescent,
    Proposed,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Euclidean, Method::Tangent, Method::GradientDescent, Method::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Method::Euclidean => "euclidean",
            Method::Tangent => "tangent",
            Method::GradientDescent => "gradient_descent",
            Method::Proposed => "proposed",
        }
    }
}

/// An image with its sparse approximation.
struct Prepared {
    img: Image,
    approx: SparseApprox,
}

fn prepare(imgs: &[Image], k: usize, dict: &Dictionary) -> Result<Vec<Prepared>> {
    imgs.par_iter().map(|img| Ok(Prepared { img: img.clone(), approx: decompose(img, k, dict)?.approx })).collect()
}

fn method_distance(m: Method, a: &Prepared, b: &Prepared, kind: GroupKind, refine: bool) -> Result<f64> {
    let rcfg = RefinementConfig::default();
    match m {
        Method::Euclidean => euclidean_distance(&a.img, &b.img),
        Method::Tangent => Ok(tangent_distance(&a.img, &b.img, kind, &rcfg)?.distance),
        Method::GradientDescent => Ok(gd_distance(&a.img, &b.img, kind, &rcfg)?.0),
        Method::Proposed => {
            let r = register(&a.approx, &b.approx, refine, &rcfg)?;
            Ok(if refine { r.d_refined } else { r.d_a })
        }
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len().max(1) as f64).sqrt()
}

/// Distances from a reference object to random transforms of itself and of other objects, per
/// method. The reference is object 0; each further object is one inter-class comparison.
pub fn distance_compare(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let objects = test_objects(spec, 3)?;
    let dict = Dictionary::new(spec.dictionary.clone())?;
    let kind = spec.dictionary.kind;
    let k = spec.k[0];
    let reference = prepare(&objects[..1], k, &dict)?.remove(0);
    let mut t = Table::new(spec.id, &["object", "method", "trials", "mean", "std"]);
    for (c, obj) in objects.iter().enumerate() {
        let imgs: Vec<Image> = synth_transformed(obj, spec.trials, &spec.ranges, spec.seed.wrapping_add(1000 + c as u64))?
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        let prepared = prepare(&imgs, k, &dict)?;
        for m in Method::ALL {
            let d = prepared.par_iter().map(|b| method_distance(m, &reference, b, kind, spec.refine)).collect::<Result<Vec<_>>>()?;
            t.push(vec![c.to_string(), m.name().into(), d.len().to_string(), num(mean(&d)), num(std_dev(&d))]);
        }
    }
    Ok(t)
}

/// Labelled digits split into disjoint training and test sets.
#[derive(Debug, Clone)]
pub struct DigitSplit {
    pub train: Vec<(Image, u8)>,
    pub test: Vec<(Image, u8)>,
}

/// Draws `train_per_class + test_per_class` images per class from an IDX pair and splits them.
pub fn load_digit_split(images: &std::path::Path, labels: &std::path::Path, spec: &ExperimentSpec) -> Result<DigitSplit> {
    let classes: BTreeSet<u8> = spec.classes.iter().copied().collect();
    let per = spec.train_per_class + spec.test_per_class;
    let all = crate::imaging::load_idx(images, labels, &classes, per, spec.seed)
        .map_err(|e| match e {
            Error::Io(io) => Error::Data(format!("{}: {io}", images.display())),
            other => other,
        })?;
    let mut split = DigitSplit { train: Vec::new(), test: Vec::new() };
    for &c in &classes {
        let of: Vec<Image> = all.iter().filter(|(_, l)| *l == c).map(|(i, _)| i.clone()).collect();
        if of.len() < per {
            return Err(Error::Data(format!("class {c} has only {} images, {per} needed", of.len())));
        }
        for (j, img) in of.into_iter().enumerate() {
            if j < spec.train_per_class {
                split.train.push((img, c));
            } else {
                split.test.push((img, c));
            }
        }
    }
    Ok(split)
}

/// Locates an IDX image/label pair in `dir`, preferring the MNIST training files.
pub fn find_idx_pair(dir: &std::path::Path) -> Result<(PathBuf, PathBuf)> {
    let candidates = [
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        ("train-images.idx3-ubyte", "train-labels.idx1-ubyte"),
        ("digits-images-idx3-ubyte", "digits-labels-idx1-ubyte"),
    ];
    for (i, l) in candidates {
        let (pi, pl) = (dir.join(i), dir.join(l));
        if pi.is_file() && pl.is_file() {
            return Ok((pi, pl));
        }
    }
    Err(Error::Data(format!("no IDX image/label pair found in {}", dir.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOutcome {
    /// Accuracy in `[0, 1]` per method, in [`Method::ALL`] order.
    pub accuracy: Vec<(Method, f64)>,
    pub table: Table,
}

/// Nearest-neighbour labels of randomly transformed test digits under each distance method.
pub fn classify_split(spec: &ExperimentSpec, split: &DigitSplit, methods: &[Method]) -> Result<ClassifyOutcome> {
    spec.validate()?;
    let (w, h) = (spec.dictionary.width, spec.dictionary.height);
    if let Some((bad, _)) = split.train.iter().chain(&split.test).find(|(i, _)| i.width() != w || i.height() != h) {
        return Err(Error::Data(format!("digit of size {}x{} does not match the {w}x{h} dictionary", bad.width(), bad.height())));
    }
    let dict = Dictionary::new(spec.dictionary.clone())?;
    let kind = spec.dictionary.kind;
    let k = spec.k[0];
    let mut test_imgs = Vec::with_capacity(split.test.len());
    for (j, (img, _)) in split.test.iter().enumerate() {
        let (warped, _) = synth_transformed(img, 1, &spec.ranges, spec.seed.wrapping_add(j as u64))?.remove(0);
        test_imgs.push(warped);
    }
    let train_imgs: Vec<Image> = split.train.iter().map(|(i, _)| i.clone()).collect();
    let need_sparse = methods.contains(&Method::Proposed);
    let k_eff = if need_sparse { k } else { 1 };
    let train = prepare(&train_imgs, k_eff, &dict)?;
    let test = prepare(&test_imgs, k_eff, &dict)?;
    let mut t = Table::new(spec.id, &["method", "test", "train", "accuracy"]);
    let mut accuracy = Vec::new();
    for &m in methods {
        let started = std::time::Instant::now();
        let predictions = test
            .par_iter()
            .map(|q| {
                let mut best = (f64::INFINITY, u8::MAX);
                for (p, (_, label)) in train.iter().zip(&split.train) {
                    let d = method_distance(m, p, q, kind, spec.refine)?;
                    if d < best.0 {
                        best = (d, *label);
                    }
                }
                Ok(best.1)
            })
            .collect::<Result<Vec<u8>>>()?;
        let correct = predictions.iter().zip(&split.test).filter(|(p, (_, l))| *p == l).count();
        let acc = correct as f64 / split.test.len() as f64;
        log::info!("classify: {} accuracy {acc:.3} in {:.1?}", m.name(), started.elapsed());
        t.push(vec![m.name().into(), split.test.len().to_string(), split.train.len().to_string(), num(acc)]);
        accuracy.push((m, acc));
    }
    Ok(ClassifyOutcome { accuracy, table: t })
}

/// Loads the digits from `spec.data_dir` and runs [`classify_split`] for every method.
pub fn run_classify(spec: &ExperimentSpec) -> Result<ClassifyOutcome> {
    spec.validate()?;
    let dir = spec.data_dir.as_ref().ok_or_else(|| Error::Config("classification needs a data directory".into()))?;
    let (images, labels) = find_idx_pair(dir)?;
    let split = load_digit_split(&images, &labels, spec)?;
    classify_split(spec, &split, &Method::ALL)
}

/// Spearman correlations `(approx vs parameter, registration vs parameter)` of a sweep table.
pub fn sweep_trends(table: &Table) -> Option<(f64, f64)> {
    let param = table.column(table.header.first()?)?;
    let a = table.column("approx_error")?;
    let r = table.column("registration_error")?;
    Some((spearman(&param, &a), spearman(&param, &r)))
}

/// Dispatches on `spec.id`.
pub fn run(spec: &ExperimentSpec) -> Result<Table> {
    match spec.id {
        ExperimentId::AnisoSweep => run_aniso_sweep(spec),
        ExperimentId::ScaleStepSweep => run_scale_step_sweep(spec),
        ExperimentId::TransformErrors => run_transform_errors(spec),
        ExperimentId::DistanceCompare => distance_compare(spec),
        ExperimentId::Classify => Ok(run_classify(spec)?.table),
    }
}
