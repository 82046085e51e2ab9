//! Transformation inconsistency `ρ`, evaluated with closed-form inner products of continuous
//! Gaussian atoms.

use std::f64::consts::{LN_2, PI, SQRT_2};

use rayon::prelude::*;

use crate::dictionary::{DictionaryConfig, MotherFunction};
use crate::error::{Error, Result};
use crate::geometry::{compose_unchecked, inverse, GroupKind, Stabilizer, TransformParams};

/// Inner product `⟨φ_γ₁, φ_γ₂⟩` of unit-norm continuous atoms `exp(-(u/ν)² - v²)`.
pub fn gaussian_inner_product(nu: f64, g1: &TransformParams, g2: &TransformParams) -> f64 {
    let m1 = precision(nu, g1);
    let m2 = precision(nu, g2);
    let s = [m1[0] + m2[0], m1[1] + m2[1], m1[2] + m2[2]];
    let det = s[0] * s[2] - s[1] * s[1];
    // M₁ S⁻¹ M₂ for symmetric 2×2 matrices stored as [xx, xy, yy]
    let inv = [s[2] / det, -s[1] / det, s[0] / det];
    let t = mul(&m1, &inv);
    let k = [
        t[0][0] * m2[0] + t[0][1] * m2[1],
        t[0][0] * m2[1] + t[0][1] * m2[2],
        t[1][0] * m2[0] + t[1][1] * m2[1],
        t[1][0] * m2[1] + t[1][1] * m2[2],
    ];
    let d = [g1.b[0] - g2.b[0], g1.b[1] - g2.b[1]];
    let q = d[0] * (k[0] * d[0] + k[1] * d[1]) + d[1] * (k[2] * d[0] + k[3] * d[1]);
    // ∫ g₁g₂ = π/√det S · e^{-q}; each ‖gᵢ‖² = π ν aᵢ² / 2
    2.0 / (nu * g1.a * g2.a * det.sqrt()) * (-q).exp()
}

/// `‖φ_γ₁ − φ_γ₂‖₂` for unit-norm continuous atoms.
pub fn gaussian_distance(nu: f64, g1: &TransformParams, g2: &TransformParams) -> f64 {
    (2.0 - 2.0 * gaussian_inner_product(nu, g1, g2)).max(0.0).sqrt()
}

fn precision(nu: f64, g: &TransformParams) -> [f64; 3] {
    let (s, c) = g.theta.sin_cos();
    let inv_nu2 = 1.0 / (nu * nu);
    let a2 = g.a * g.a;
    [
        (c * c * inv_nu2 + s * s) / a2,
        c * s * (inv_nu2 - 1.0) / a2,
        (s * s * inv_nu2 + c * c) / a2,
    ]
}

fn mul(m: &[f64; 3], n: &[f64; 3]) -> [[f64; 2]; 2] {
    [
        [m[0] * n[0] + m[1] * n[1], m[0] * n[1] + m[1] * n[2]],
        [m[1] * n[0] + m[2] * n[1], m[1] * n[1] + m[2] * n[2]],
    ]
}

/// Sweep of relative transformations `δ = η′⁻¹ ∘ η` around each anchor `η′`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoGrid {
    pub trans_extent: f64,
    pub trans_step: f64,
    pub rot_step: f64,
    /// Extent and step of `log₂ a`.
    pub log2_scale_extent: f64,
    pub log2_scale_step: f64,
    /// Cap on the subsampled atoms `γ` of the numerator.
    pub max_atoms: usize,
}

impl Default for RhoGrid {
    fn default() -> Self {
        Self {
            trans_extent: 8.0,
            trans_step: 1.0,
            rot_step: PI / 16.0,
            log2_scale_extent: 1.0,
            log2_scale_step: 0.25,
            max_atoms: 500,
        }
    }
}

impl RhoGrid {
    fn validate(&self) -> Result<()> {
        let steps = [self.trans_step, self.rot_step, self.log2_scale_step];
        if steps.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.trans_extent < 0.0
            || self.log2_scale_extent < 0.0
            || self.max_atoms == 0
        {
            return Err(Error::Config(format!("invalid rho grid {self:?}")));
        }
        Ok(())
    }

    fn axis(extent: f64, step: f64) -> Vec<f64> {
        let n = (extent / step + 1e-9).floor() as i64;
        (-n..=n).map(|k| k as f64 * step).collect()
    }

    /// Relative transformations outside the stabilizer.
    fn deltas(&self, kind: GroupKind, stab: &Stabilizer) -> Vec<TransformParams> {
        let ts = Self::axis(self.trans_extent, self.trans_step);
        let thetas: Vec<f64> = if kind.has_rotation() {
            let n = ((stab.rotation_period() / self.rot_step) - 1e-9).ceil().max(1.0) as usize;
            (0..n).map(|k| k as f64 * self.rot_step).collect()
        } else {
            vec![0.0]
        };
        let scales: Vec<f64> = if kind.has_scale() {
            Self::axis(self.log2_scale_extent, self.log2_scale_step).into_iter().map(f64::exp2).collect()
        } else {
            vec![1.0]
        };
        let mut out = Vec::new();
        for &a in &scales {
            for &theta in &thetas {
                for &by in &ts {
                    for &bx in &ts {
                        let d = TransformParams::new(bx, by, a, theta);
                        if !stab.elements().iter().any(|p| d.approx_eq(p, 1e-12)) {
                            out.push(d);
                        }
                    }
                }
            }
        }
        out
    }

    fn initial_steps(&self, kind: GroupKind) -> Vec<f64> {
        let t = self.trans_step / 2.0;
        match kind {
            GroupKind::Translation2D => vec![t, t],
            GroupKind::SpecialEuclidean2D => vec![t, t, self.rot_step / 2.0],
            GroupKind::Similarity2D => vec![t, t, self.log2_scale_step * LN_2 / 2.0, self.rot_step / 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoEstimate {
    pub rho: f64,
    pub eta: TransformParams,
    pub eta_prime: TransformParams,
    /// Stabilizer element achieving the infimum.
    pub pi: TransformParams,
    /// Atom achieving the inner supremum.
    pub gamma: TransformParams,
    pub grid: RhoGrid,
    /// Number of `(η, η′)` pairs whose ratio was evaluated in full.
    pub evaluated: usize,
}

/// Denominators below this are treated as `η′ ∈ η∘S_φ`.
const MIN_DENOMINATOR: f64 = 1e-4;

struct Problem<'a> {
    nu: f64,
    stab: &'a Stabilizer,
    atoms: Vec<TransformParams>,
}

#[derive(Clone, Copy)]
struct Eval {
    value: f64,
    pi: usize,
    gamma: usize,
}

impl Problem<'_> {
    fn denominator(&self, delta: &TransformParams) -> f64 {
        gaussian_distance(self.nu, delta, &TransformParams::identity())
    }

    /// `min_π max_γ ‖U(η′δπη′⁻¹)φ_γ − φ_γ‖ / ‖φ_δ − φ‖`, abandoning the pair as soon as it
    /// cannot exceed `floor`.
    fn ratio(&self, anchor: &TransformParams, delta: &TransformParams, floor: f64) -> Option<Eval> {
        let den = self.denominator(delta);
        if den < MIN_DENOMINATOR || SQRT_2 / den <= floor {
            return None;
        }
        let inv_anchor = inverse(anchor);
        let ad = compose_unchecked(anchor, delta);
        let mut best: Option<Eval> = None;
        for (k, pi) in self.stab.elements().iter().enumerate() {
            let tau = compose_unchecked(&compose_unchecked(&ad, pi), &inv_anchor);
            // this π cannot lower the infimum once its running maximum passes the current one
            let cap = best.map_or(f64::INFINITY, |b| b.value * den);
            let mut worst = 0.0;
            let mut arg = 0;
            for (j, g) in self.atoms.iter().enumerate() {
                let n = gaussian_distance(self.nu, &compose_unchecked(&tau, g), g);
                if n > worst {
                    worst = n;
                    arg = j;
                    if worst >= cap {
                        break;
                    }
                }
            }
            if worst < cap {
                best = Some(Eval { value: worst / den, pi: k, gamma: arg });
                if worst / den <= floor {
                    return None;
                }
            }
        }
        best.filter(|b| b.value > floor)
    }
}

/// Atoms of the discretization: every scale and rotation at an `n × n` grid of positions that
/// includes the domain corners, with `n` as large as the cap allows (at least 2).
fn atom_subsample(cfg: &DictionaryConfig, stab: &Stabilizer, cap: usize, anchors: &[TransformParams]) -> Result<Vec<TransformParams>> {
    let thetas = cfg.rotation_samples()?;
    let shapes = thetas.len() * cfg.scales.len();
    let mut n = 2usize;
    while (n + 1) * (n + 1) * shapes + anchors.len() <= cap && n < cfg.width.max(cfg.height) {
        n += 1;
    }
    let pos = |len: usize, k: usize| -> f64 {
        if n == 1 || len == 1 {
            0.0
        } else {
            ((len - 1) as f64 * k as f64 / (n - 1) as f64).round()
        }
    };
    let mut out: Vec<TransformParams> = anchors.to_vec();
    for &a in &cfg.scales {
        for &theta in &thetas {
            for ky in 0..n {
                for kx in 0..n {
                    let g = TransformParams::new(pos(cfg.width, kx), pos(cfg.height, ky), a, theta);
                    if !out.iter().any(|o| stab.same_coset(o, &g, 1e-9)) {
                        out.push(g);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn anchors(cfg: &DictionaryConfig) -> Vec<TransformParams> {
    let cx = ((cfg.width - 1) / 2) as f64;
    let cy = ((cfg.height - 1) / 2) as f64;
    let mut out = Vec::new();
    for &a in &cfg.scales {
        out.push(TransformParams::new(cx, cy, a, 0.0));
        out.push(TransformParams::new(0.0, 0.0, a, 0.0));
    }
    out
}

/// Estimates `ρ` by sweeping `η = η′ ∘ δ` over the grid for anchors `η′` of the
/// discretization, then locally ascending from the best pairs when `refine_local` is set.
/// The result is a lower bound of the supremum over the full group.
pub fn estimate_rho(cfg: &DictionaryConfig, stab: &Stabilizer, grid: &RhoGrid, refine_local: bool) -> Result<RhoEstimate> {
    cfg.validate()?;
    grid.validate()?;
    let nu = match cfg.mother {
        MotherFunction::GaussianAniso { nu } => nu,
        MotherFunction::Box1D { .. } => return Err(Error::invalid("rho estimation needs a Gaussian mother function")),
    };
    if stab.is_empty() {
        return Err(Error::InfiniteStabilizer);
    }
    let kind = cfg.kind;
    let anchors = anchors(cfg);
    let problem = Problem { nu, stab, atoms: atom_subsample(cfg, stab, grid.max_atoms, &anchors)? };
    let mut deltas = grid.deltas(kind, stab);
    if deltas.is_empty() {
        return Err(Error::EmptyGrid("rho sweep has no transformation outside the stabilizer".into()));
    }
    // smallest denominators first so the √2/den bound prunes the tail
    let mut keyed: Vec<(f64, TransformParams)> = deltas.drain(..).map(|d| (problem.denominator(&d), d)).collect();
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut top: Vec<(f64, usize, TransformParams, Eval)> = Vec::new();
    let mut floor = 0.0;
    let mut evaluated = 0;
    const CHUNK: usize = 64;
    const KEEP: usize = 4;
    for chunk in keyed.chunks(CHUNK) {
        if SQRT_2 / chunk[0].0.max(MIN_DENOMINATOR) <= floor {
            break;
        }
        let found: Vec<(f64, usize, TransformParams, Eval)> = chunk
            .par_iter()
            .flat_map_iter(|(_, d)| {
                let problem = &problem;
                anchors
                    .iter()
                    .enumerate()
                    .filter_map(move |(ai, an)| problem.ratio(an, d, floor).map(|e| (e.value, ai, *d, e)))
            })
            .collect();
        evaluated += found.len();
        top.extend(found);
        top.sort_by(|x, y| y.0.total_cmp(&x.0));
        top.truncate(KEEP);
        if top.len() == KEEP {
            floor = top[KEEP - 1].0;
        }
    }
    let Some(&(mut rho, mut ai, mut delta, mut eval)) = top.first() else {
        return Err(Error::EmptyGrid("no admissible (eta, eta') pair in the rho sweep".into()));
    };

    if refine_local {
        let results: Vec<(f64, usize, TransformParams, Eval)> = top
            .par_iter()
            .map(|&(v, a, d, e)| {
                let (v2, d2, e2) = ascend(&problem, &anchors[a], d, v, e, &grid.initial_steps(kind), kind);
                (v2, a, d2, e2)
            })
            .collect();
        for (v, a, d, e) in results {
            if v > rho {
                rho = v;
                ai = a;
                delta = d;
                eval = e;
            }
        }
    }

    let anchor = anchors[ai];
    Ok(RhoEstimate {
        rho,
        eta: compose_unchecked(&anchor, &delta),
        eta_prime: anchor,
        pi: stab.elements()[eval.pi],
        gamma: problem.atoms[eval.gamma],
        grid: *grid,
        evaluated,
    })
}

/// Coordinate pattern search maximizing the ratio over `δ`.
fn ascend(problem: &Problem, anchor: &TransformParams, start: TransformParams, value: f64, eval: Eval, steps: &[f64], kind: GroupKind) -> (f64, TransformParams, Eval) {
    let mut tau = start.to_coords(kind);
    let mut best = (value, eval);
    let mut steps = steps.to_vec();
    let min_steps: Vec<f64> = steps.iter().map(|s| s * 1e-3).collect();
    for _ in 0..400 {
        let mut improved = false;
        for k in 0..tau.len() {
            for sign in [1.0, -1.0] {
                let mut cand = tau.clone();
                cand[k] += sign * steps[k];
                let d = TransformParams::from_coords(&cand, kind);
                if let Some(e) = problem.ratio(anchor, &d, best.0) {
                    best = (e.value, e);
                    tau = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
            if steps.iter().zip(&min_steps).all(|(s, m)| s < m) {
                break;
            }
        }
    }
    (best.0, TransformParams::from_coords(&tau, kind), best.1)
}
