//! Brute-force transformation-invariant distance `d(p,q) = min_η ‖U(η)p − q‖₂`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{about_center, TransformParams};
use crate::registration::{candidate_set, refine_objective, render_transformed, RefinementConfig};
use crate::sparse::SparseApprox;

/// Grid of transformations about the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGrid {
    pub trans_extent: f64,
    pub trans_step: f64,
    pub rot_step: f64,
    pub log2_scale_extent: f64,
    pub log2_scale_step: f64,
    pub max_points: usize,
    /// Best grid points handed to the local refinement.
    pub seeds: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            trans_extent: 8.0,
            trans_step: 1.0,
            rot_step: PI / 16.0,
            log2_scale_extent: 1.0,
            log2_scale_step: 0.25,
            max_points: 1_000_000,
            seeds: 4,
        }
    }
}

impl OracleGrid {
    fn axis(extent: f64, step: f64) -> Vec<f64> {
        let n = (extent / step + 1e-9).floor() as i64;
        (-n..=n).map(|k| k as f64 * step).collect()
    }

    fn axes(&self, p: &SparseApprox) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let kind = p.config().kind;
        let ts = Self::axis(self.trans_extent, self.trans_step);
        let thetas = if kind.has_rotation() {
            let n = ((2.0 * PI / self.rot_step) - 1e-9).ceil() as usize;
            (0..n).map(|k| k as f64 * self.rot_step).collect()
        } else {
            vec![0.0]
        };
        let scales = if kind.has_scale() {
            Self::axis(self.log2_scale_extent, self.log2_scale_step).into_iter().map(f64::exp2).collect()
        } else {
            vec![1.0]
        };
        (ts, thetas, scales)
    }

    pub fn point_count(&self, p: &SparseApprox) -> usize {
        let (ts, thetas, scales) = self.axes(p);
        ts.len() * ts.len() * thetas.len() * scales.len()
    }

    fn validate(&self) -> Result<()> {
        let steps = [self.trans_step, self.rot_step, self.log2_scale_step];
        if steps.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.trans_extent < 0.0 || self.log2_scale_extent < 0.0 || self.seeds == 0 {
            return Err(Error::Config(format!("invalid oracle grid {self:?}")));
        }
        Ok(())
    }
}

/// Exhaustive grid search followed by gradient refinement from the best grid points and from
/// every feature-to-feature candidate. Returns `(d(p,q), η₀)`.
pub fn oracle_distance(p: &SparseApprox, q: &SparseApprox, grid: &OracleGrid) -> Result<(f64, TransformParams)> {
    grid.validate()?;
    let points = grid.point_count(p);
    if points > grid.max_points {
        return Err(Error::GridTooLarge { points, limit: grid.max_points });
    }
    let stab = p.config().stabilizer()?;
    let set = candidate_set(p, q, &stab)?;
    let cfg = p.config();
    let kind = cfg.kind;
    let center = [(cfg.width as f64 - 1.0) / 2.0, (cfg.height as f64 - 1.0) / 2.0];
    let target = q.synthesize();
    let target = target.pixels();
    let value = |eta: &TransformParams| -> f64 {
        let r = render_transformed(p, eta);
        r.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };

    let (ts, thetas, scales) = grid.axes(p);
    let mut grid_points = Vec::with_capacity(points);
    for &a in &scales {
        for &theta in &thetas {
            for &by in &ts {
                for &bx in &ts {
                    grid_points.push(about_center(&TransformParams::new(bx, by, a, theta), center));
                }
            }
        }
    }
    let mut scored: Vec<(f64, TransformParams)> = grid_points.par_iter().map(|eta| (value(eta), *eta)).collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0));
    scored.truncate(grid.seeds);
    let mut seeds: Vec<TransformParams> = scored.into_iter().map(|(_, e)| e).collect();
    seeds.extend(set.candidates.iter().map(|c| c.eta));

    let rcfg = RefinementConfig::default();
    let results: Vec<Result<(f64, TransformParams)>> = seeds
        .par_iter()
        .map(|s| {
            let out = refine_objective(|eta| render_transformed(p, eta), target, kind, s, &rcfg)?;
            Ok((out.distance, out.eta))
        })
        .collect();
    let mut best: Option<(f64, TransformParams)> = None;
    for r in results {
        let (d, eta) = r?;
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, eta));
        }
    }
    Ok(best.expect("at least one seed"))
}
