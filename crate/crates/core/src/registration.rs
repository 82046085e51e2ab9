//! Registration of sparse patterns over feature-to-feature candidate transformations,
//! with optional gradient refinement under the Gram metric of the pattern's partial derivatives.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{angle_distance, compose_unchecked, inverse, GroupKind, Stabilizer, TransformParams, PARAM_TOL};
use crate::imaging::{dot, Image};
use crate::sparse::SparseApprox;

/// Candidate `δᵢ ∘ π ∘ γⱼ⁻¹` with its source indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub eta: TransformParams,
    /// Index of `δᵢ` in `q`.
    pub i: usize,
    /// Index of `γⱼ` in `p`.
    pub j: usize,
    /// Index of `π` in the stabilizer.
    pub pi: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    /// Number of compositions formed before deduplication, `|S_φ|·K₁·K₂`.
    pub raw_count: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, eta: &TransformParams, tol: f64) -> bool {
        self.candidates.iter().any(|c| c.eta.approx_eq(eta, tol))
    }
}

pub fn candidate_set(p: &SparseApprox, q: &SparseApprox, stab: &Stabilizer) -> Result<CandidateSet> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyApproximation);
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut raw_count = 0;
    for (i, delta) in q.supports.iter().enumerate() {
        for (j, gamma) in p.supports.iter().enumerate() {
            let g_inv = inverse(gamma);
            for (k, pi) in stab.elements().iter().enumerate() {
                raw_count += 1;
                let eta = compose_unchecked(&compose_unchecked(delta, pi), &g_inv);
                if !candidates.iter().any(|c| c.eta.approx_eq(&eta, PARAM_TOL)) {
                    candidates.push(Candidate { eta, i, j, pi: k });
                }
            }
        }
    }
    Ok(CandidateSet { candidates, raw_count })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementConfig {
    pub max_iters: usize,
    /// Initial step `w` of the backtracking search.
    pub initial_step: f64,
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
    pub fd_translation: f64,
    pub fd_log_scale: f64,
    pub fd_rotation: f64,
    /// Ridge added to the metric, relative to its mean diagonal.
    pub ridge: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            initial_step: 0.5,
            shrink: 0.5,
            armijo: 1e-4,
            max_backtracks: 30,
            fd_translation: 0.5,
            fd_log_scale: 0.01,
            fd_rotation: 0.01,
            ridge: 1e-6,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.initial_step,
            self.shrink,
            self.armijo,
            self.fd_translation,
            self.fd_log_scale,
            self.fd_rotation,
            self.ridge,
        ];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.shrink >= 1.0 || self.max_iters == 0 {
            return Err(Error::Config(format!("invalid refinement configuration {self:?}")));
        }
        Ok(())
    }

    fn fd_steps(&self, kind: GroupKind) -> Vec<f64> {
        match kind {
            GroupKind::Translation2D => vec![self.fd_translation; 2],
            GroupKind::SpecialEuclidean2D => vec![self.fd_translation, self.fd_translation, self.fd_rotation],
            GroupKind::Similarity2D => vec![
                self.fd_translation,
                self.fd_translation,
                self.fd_log_scale,
                self.fd_rotation,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub eta: TransformParams,
    pub distance: f64,
    /// Objective `J = ‖U(η)p − q‖²` after each accepted iterate, starting with the initial value.
    pub trace: Vec<f64>,
    /// Whether the identity metric had to replace a singular Gram metric at some iteration.
    pub metric_fallback: bool,
}

/// Gradient descent `τ ← τ − w G⁻¹ ∇J` over local coordinates `(b, log a, θ)` where `render(η)`
/// produces `U(η)X` as a raw buffer matching `target`.
pub fn refine_objective<F>(render: F, target: &[f64], kind: GroupKind, start: &TransformParams, rcfg: &RefinementConfig) -> Result<RefineOutcome>
where
    F: Fn(&TransformParams) -> Vec<f64> + Sync,
{
    rcfg.validate()?;
    start.validate(kind)?;
    let objective = |tau: &[f64]| -> (f64, Vec<f64>) {
        let eta = TransformParams::from_coords(tau, kind);
        if !(eta.b.iter().all(|v| v.is_finite()) && eta.a.is_finite() && eta.a > 0.0 && eta.theta.is_finite()) {
            return (f64::INFINITY, Vec::new());
        }
        let mut r = render(&eta);
        for (v, t) in r.iter_mut().zip(target) {
            *v -= t;
        }
        (dot(&r, &r), r)
    };
    let steps = rcfg.fd_steps(kind);
    let dim = steps.len();
    let mut tau = start.to_coords(kind);
    let (mut j, mut resid) = objective(&tau);
    let mut trace = vec![j];
    let mut metric_fallback = false;

    for _ in 0..rcfg.max_iters {
        if j == 0.0 {
            break;
        }
        // central-difference partials of U(τ)X
        let partials: Vec<Vec<f64>> = (0..dim)
            .into_par_iter()
            .map(|k| {
                let mut plus = tau.clone();
                let mut minus = tau.clone();
                plus[k] += steps[k];
                minus[k] -= steps[k];
                let a = render(&TransformParams::from_coords(&plus, kind));
                let b = render(&TransformParams::from_coords(&minus, kind));
                a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * steps[k])).collect()
            })
            .collect();
        let grad = DVector::from_iterator(dim, partials.iter().map(|d| 2.0 * dot(&resid, d)));
        if grad.norm() == 0.0 {
            break;
        }
        let mut g = DMatrix::from_fn(dim, dim, |r, c| dot(&partials[r], &partials[c]));
        let mean_diag = g.trace() / dim as f64;
        let ridge = rcfg.ridge * if mean_diag > 0.0 { mean_diag } else { 1.0 };
        for k in 0..dim {
            g[(k, k)] += ridge;
        }
        let direction = match g.cholesky() {
            Some(ch) if mean_diag > 0.0 => ch.solve(&grad),
            _ => {
                metric_fallback = true;
                grad.clone()
            }
        };
        let slope = grad.dot(&direction);
        if !(slope > 0.0) {
            metric_fallback = true;
            break;
        }

        let mut w = rcfg.initial_step;
        let mut accepted = None;
        for _ in 0..=rcfg.max_backtracks {
            let cand: Vec<f64> = tau.iter().zip(direction.iter()).map(|(t, d)| t - w * d).collect();
            let (jc, rc) = objective(&cand);
            if jc < j && jc <= j - rcfg.armijo * w * slope {
                accepted = Some((cand, jc, rc));
                break;
            }
            w *= rcfg.shrink;
        }
        let Some((cand, jc, rc)) = accepted else { break };
        let gain = j - jc;
        tau = cand;
        j = jc;
        resid = rc;
        trace.push(j);
        if gain <= 1e-12 * trace[0] {
            break;
        }
    }

    Ok(RefineOutcome {
        eta: TransformParams::from_coords(&tau, kind),
        distance: j.sqrt(),
        trace,
        metric_fallback,
    })
}

pub(crate) fn render_transformed(p: &SparseApprox, eta: &TransformParams) -> Vec<f64> {
    let cfg = p.config();
    let mut buf = vec![0.0; cfg.width * cfg.height];
    for (c, g) in p.atoms() {
        crate::dictionary::render_atom_into(&mut buf, cfg.width, cfg.height, &cfg.mother, &compose_unchecked(eta, g), c);
    }
    buf
}

/// `‖U(η)p − q‖₂` with `U(η)p` rendered analytically; `q_raster` is the synthesized `q`.
pub fn objective(p: &SparseApprox, q_raster: &Image, eta: &TransformParams) -> f64 {
    let buf = render_transformed(p, eta);
    buf.iter()
        .zip(q_raster.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn refine_detailed(p: &SparseApprox, q: &SparseApprox, eta_start: &TransformParams, rcfg: &RefinementConfig) -> Result<RefineOutcome> {
    check_compatible(p, q)?;
    let target = q.synthesize();
    refine_objective(|eta| render_transformed(p, eta), target.pixels(), p.config().kind, eta_start, rcfg)
}

/// Refines `eta_start`, returning the final transformation and `‖U(η)p − q‖₂`.
pub fn refine(p: &SparseApprox, q: &SparseApprox, eta_start: &TransformParams, rcfg: &RefinementConfig) -> Result<(TransformParams, f64)> {
    let out = refine_detailed(p, q, eta_start, rcfg)?;
    Ok((out.eta, out.distance))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub eta_hat: TransformParams,
    pub d_a: f64,
    /// Objective value of every candidate, in candidate-set order.
    pub candidates: Vec<(Candidate, f64)>,
    pub refined: bool,
    pub eta_refined: TransformParams,
    pub d_refined: f64,
    pub metric_fallback: bool,
}

fn check_compatible(p: &SparseApprox, q: &SparseApprox) -> Result<()> {
    let (a, b) = (p.config(), q.config());
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            left_w: a.width,
            left_h: a.height,
            right_w: b.width,
            right_h: b.height,
        });
    }
    if a.kind != b.kind || a.mother != b.mother {
        return Err(Error::invalid("patterns come from different dictionaries"));
    }
    Ok(())
}

/// Picks the minimizer; values within `1e-9` are tied and resolved toward the transformation
/// closest to the identity.
pub(crate) fn select_best<'a, I>(values: I) -> Option<(TransformParams, f64)>
where
    I: IntoIterator<Item = (&'a TransformParams, f64)>,
{
    let mut best: Option<(TransformParams, f64)> = None;
    for (eta, v) in values {
        best = match best {
            None => Some((*eta, v)),
            Some((b, bv)) => {
                if v < bv - 1e-9 || ((v - bv).abs() <= 1e-9 && eta.magnitude() < b.magnitude()) {
                    Some((*eta, v))
                } else {
                    Some((b, bv))
                }
            }
        };
    }
    best
}

pub fn register(p: &SparseApprox, q: &SparseApprox, refine_flag: bool, rcfg: &RefinementConfig) -> Result<RegistrationResult> {
    check_compatible(p, q)?;
    let stab = p.config().stabilizer()?;
    let set = candidate_set(p, q, &stab)?;
    let target = q.synthesize();
    let values: Vec<f64> = set
        .candidates
        .par_iter()
        .map(|c| objective(p, &target, &c.eta))
        .collect();
    let (eta_hat, d_a) = select_best(set.candidates.iter().map(|c| &c.eta).zip(values.iter().copied()))
        .expect("candidate set is nonempty");
    let mut result = RegistrationResult {
        eta_hat,
        d_a,
        candidates: set.candidates.into_iter().zip(values).collect(),
        refined: false,
        eta_refined: eta_hat,
        d_refined: d_a,
        metric_fallback: false,
    };
    if refine_flag {
        let out = refine_objective(|eta| render_transformed(p, eta), target.pixels(), p.config().kind, &eta_hat, rcfg)?;
        result.refined = true;
        result.eta_refined = out.eta;
        result.d_refined = out.distance;
        result.metric_fallback = out.metric_fallback;
    }
    Ok(result)
}

/// Errors `(‖b̂ − b‖₂, |â − a|, rotation error in degrees)`; the rotation error is folded by the
/// half-turn symmetry, `min(Δ, 180° − Δ)`.
pub fn transformation_error(eta_hat: &TransformParams, eta_true: &TransformParams) -> (f64, f64, f64) {
    let trans = (eta_hat.b[0] - eta_true.b[0]).hypot(eta_hat.b[1] - eta_true.b[1]);
    let scale = (eta_hat.a - eta_true.a).abs();
    let rot = angle_distance(eta_hat.theta, eta_true.theta, std::f64::consts::PI).to_degrees();
    (trans, scale, rot)
}
