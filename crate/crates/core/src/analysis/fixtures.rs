//! Small constructions where registration or robust independence is known to break down.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use crate::dictionary::DictionaryConfig;
use crate::error::Result;
use crate::geometry::{GroupKind, TransformParams};
use crate::imaging::{l2_norm, Image};
use crate::sparse::SparseApprox;

/// `((e₁, e₂, v), (e₁, e₂, v′))` in ℝ³ with `v` tilted by `π/20` out of `e₂` and `v′` tilted by
/// `π/20` out of the bisector of `e₁, e₂`.
pub fn example1_family() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let t = PI / 20.0;
    let e1 = vec![1.0, 0.0, 0.0];
    let e2 = vec![0.0, 1.0, 0.0];
    let v = vec![0.0, t.cos(), t.sin()];
    let w = t.cos() * FRAC_1_SQRT_2;
    let v2 = vec![w, w, t.sin()];
    (vec![e1.clone(), e2.clone(), v], vec![e1, e2, v2])
}

/// Four unit-norm squares of side `size/4` tiling one unit-norm square of side `size/2`; the big
/// square comes last, so `[½, ½, ½, ½, −1]` cancels exactly.
pub fn five_squares(size: usize) -> Vec<Image> {
    let s = size / 4;
    let square = |x0: usize, y0: usize, side: usize| {
        let img = Image::from_fn(size, size, |x, y| {
            if x >= x0 && x < x0 + side && y >= y0 && y < y0 + side {
                1.0
            } else {
                0.0
            }
        });
        img.scaled(1.0 / l2_norm(&img))
    };
    vec![
        square(s, s, s),
        square(2 * s, s, s),
        square(s, 2 * s, s),
        square(2 * s, 2 * s, s),
        square(s, s, 2 * s),
    ]
}

fn approx(cfg: &Arc<DictionaryConfig>, atoms: &[(f64, TransformParams)]) -> Result<SparseApprox> {
    SparseApprox::new(Arc::clone(cfg), atoms.iter().map(|a| a.0).collect(), atoms.iter().map(|a| a.1).collect())
}

/// Four small isotropic atoms with coefficient ½ against one atom of twice the scale covering
/// them.
pub fn four_squares_patterns() -> Result<(SparseApprox, SparseApprox)> {
    let cfg = Arc::new(DictionaryConfig::gaussian(GroupKind::Similarity2D, 1.0, 48, 48)?.with_scales(vec![2.0, 4.0]));
    let small = |x, y| (0.5, TransformParams::new(x, y, 2.0, 0.0));
    let p = approx(&cfg, &[small(22.0, 22.0), small(26.0, 22.0), small(22.0, 26.0), small(26.0, 26.0)])?;
    let q = approx(&cfg, &[(1.0, TransformParams::new(24.0, 24.0, 4.0, 0.0))])?;
    Ok((p, q))
}

/// Two nearly isotropic atoms far apart; `q` rotates each in place by `π/4`.
pub fn near_isotropic_patterns() -> Result<(SparseApprox, SparseApprox)> {
    let cfg = Arc::new(DictionaryConfig::gaussian(GroupKind::SpecialEuclidean2D, 1.1, 64, 64)?);
    let p = approx(&cfg, &[(1.0, TransformParams::new(20.0, 32.0, 1.0, 0.0)), (1.0, TransformParams::new(44.0, 32.0, 1.0, PI / 2.0))])?;
    let q = approx(
        &cfg,
        &[(1.0, TransformParams::new(20.0, 32.0, 1.0, PI / 4.0)), (1.0, TransformParams::new(44.0, 32.0, 1.0, 3.0 * PI / 4.0))],
    )?;
    Ok((p, q))
}

/// A horizontal and a vertical elongated bar; `q` slides each by 2 px along its own long axis.
pub fn elongated_bars_patterns() -> Result<(SparseApprox, SparseApprox)> {
    let cfg = Arc::new(DictionaryConfig::gaussian(GroupKind::SpecialEuclidean2D, 8.0, 64, 64)?);
    let p = approx(&cfg, &[(1.0, TransformParams::new(22.0, 24.0, 1.0, 0.0)), (1.0, TransformParams::new(46.0, 40.0, 1.0, PI / 2.0))])?;
    let q = approx(
        &cfg,
        &[(1.0, TransformParams::new(24.0, 24.0, 1.0, 0.0)), (1.0, TransformParams::new(46.0, 42.0, 1.0, PI / 2.0))],
    )?;
    Ok((p, q))
}

/// Two distant isotropic atoms; `q` dilates each in place by `2^{1/4}`.
pub fn distant_dilation_patterns() -> Result<(SparseApprox, SparseApprox)> {
    let cfg = Arc::new(DictionaryConfig::gaussian(GroupKind::Similarity2D, 1.0, 64, 64)?.with_scales(vec![1.0, 2.0]));
    let s = 2f64.powf(0.25);
    let p = approx(&cfg, &[(1.0, TransformParams::new(12.0, 32.0, 2.0, 0.0)), (1.0, TransformParams::new(52.0, 32.0, 2.0, 0.0))])?;
    let q = approx(&cfg, &[(1.0, TransformParams::new(12.0, 32.0, 2.0 * s, 0.0)), (1.0, TransformParams::new(52.0, 32.0, 2.0 * s, 0.0))])?;
    Ok((p, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::oracle::{oracle_distance, OracleGrid};
    use crate::imaging::{dot, l2_distance};
    use crate::registration::{register, RefinementConfig};
    use crate::sparse::synthesize;

    #[test]
    fn five_squares_are_unit_and_tile() {
        let sq = five_squares(16);
        for s in &sq {
            assert!((l2_norm(s) - 1.0).abs() < 1e-12);
        }
        assert!((dot(sq[0].pixels(), sq[4].pixels()) - 0.5).abs() < 1e-12);
        assert_eq!(dot(sq[0].pixels(), sq[1].pixels()), 0.0);
    }

    #[test]
    fn example1_geometry() {
        let (good, bad) = example1_family();
        for v in good.iter().chain(&bad) {
            assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-15);
        }
        // ‖e₁ − v′‖ is the smallest admissible α for the second family
        let d: f64 = bad[0].iter().zip(&bad[2]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!((d - 0.78).abs() < 5e-3, "{d}");
    }

    fn gap(p: &SparseApprox, q: &SparseApprox, grid: &OracleGrid) -> (f64, f64, TransformParams) {
        let da = register(p, q, false, &RefinementConfig::default()).unwrap().d_a;
        let (d, eta) = oracle_distance(p, q, grid).unwrap();
        (da, d, eta)
    }

    #[test]
    fn four_squares_gap() {
        let (p, q) = four_squares_patterns().unwrap();
        let grid = OracleGrid { trans_extent: 2.0, rot_step: 2.0 * PI, ..OracleGrid::default() };
        let (da, d, _) = gap(&p, &q, &grid);
        assert!(da - d > 0.5, "d_a {da} d {d}");
    }

    #[test]
    fn elongated_bars_prefer_identity() {
        let (p, q) = elongated_bars_patterns().unwrap();
        let grid = OracleGrid { trans_extent: 4.0, ..OracleGrid::default() };
        let (da, d, eta) = gap(&p, &q, &grid);
        let c = [31.5, 31.5];
        let local = crate::geometry::relative_to_center(&eta, c);
        assert!(local.b[0].hypot(local.b[1]) < 3.0 && crate::geometry::signed_angle(local.theta).abs() < 0.1, "{local}");
        assert!(da > 2.0 * d, "d_a {da} d {d}");
        let identity = l2_distance(&synthesize(&p), &synthesize(&q)).unwrap();
        assert!(da > 2.0 * identity);
    }

    #[test]
    fn near_isotropic_and_dilation_gaps() {
        for (p, q) in [near_isotropic_patterns().unwrap(), distant_dilation_patterns().unwrap()] {
            let identity = l2_distance(&synthesize(&p), &synthesize(&q)).unwrap();
            let da = register(&p, &q, false, &RefinementConfig::default()).unwrap().d_a;
            assert!(da > 2.0 * identity, "d_a {da} vs identity {identity}");
        }
    }
}
