//! Comparator distances between raw images: Euclidean, two-sided tangent distance, and pixel-domain
//! gradient descent over the transformation starting at the identity.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::geometry::{GroupKind, TransformParams};
use crate::imaging::{l2_distance, warp_about_center, Image};
use crate::registration::{refine_objective, RefinementConfig};

pub fn euclidean_distance(i1: &Image, i2: &Image) -> Result<f64> {
    l2_distance(i1, i2)
}

/// Central finite-difference derivatives of the warp about the image center, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentBasis {
    pub base: Image,
    pub tangents: Vec<Image>,
}

impl TangentBasis {
    pub fn new(img: &Image, kind: GroupKind, rcfg: &RefinementConfig) -> Result<Self> {
        let steps = match kind {
            GroupKind::Translation2D => vec![rcfg.fd_translation; 2],
            GroupKind::SpecialEuclidean2D => vec![rcfg.fd_translation, rcfg.fd_translation, rcfg.fd_rotation],
            GroupKind::Similarity2D => vec![rcfg.fd_translation, rcfg.fd_translation, rcfg.fd_log_scale, rcfg.fd_rotation],
        };
        let identity = TransformParams::identity().to_coords(kind);
        let mut tangents = Vec::with_capacity(steps.len());
        for (k, h) in steps.iter().enumerate() {
            let mut plus = identity.clone();
            let mut minus = identity.clone();
            plus[k] += h;
            minus[k] -= h;
            let a = warp_about_center(img, &TransformParams::from_coords(&plus, kind), kind)?;
            let b = warp_about_center(img, &TransformParams::from_coords(&minus, kind), kind)?;
            tangents.push(a.sub(&b)?.scaled(1.0 / (2.0 * h)));
        }
        Ok(Self { base: img.clone(), tangents })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentDistance {
    pub distance: f64,
    /// The joint system `[T₁, −T₂]` was rank deficient and the minimum-norm solution was used.
    pub rank_deficient: bool,
}

/// `min over x, y of ‖(I₁ + T₁x) − (I₂ + T₂y)‖₂`.
pub fn tangent_distance(i1: &Image, i2: &Image, kind: GroupKind, rcfg: &RefinementConfig) -> Result<TangentDistance> {
    i1.same_shape(i2)?;
    let b1 = TangentBasis::new(i1, kind, rcfg)?;
    let b2 = TangentBasis::new(i2, kind, rcfg)?;
    let n = i1.pixels().len();
    let p = b1.tangents.len();
    let a = DMatrix::from_fn(n, 2 * p, |r, c| {
        if c < p {
            b1.tangents[c].pixels()[r]
        } else {
            -b2.tangents[c - p].pixels()[r]
        }
    });
    let rhs = DVector::from_iterator(n, i2.pixels().iter().zip(i1.pixels()).map(|(y, x)| y - x));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * n.max(2 * p) as f64;
    let rank_deficient = smax == 0.0 || svd.singular_values.iter().any(|&s| s <= tol);
    let z = svd.solve(&rhs, tol.max(f64::MIN_POSITIVE)).map_err(|e| crate::error::Error::invalid(e.to_string()))?;
    let residual = &a * z - rhs;
    Ok(TangentDistance { distance: residual.norm(), rank_deficient })
}

/// Minimizes `‖warp(I₁, η) − I₂‖₂` over center-relative `η` by metric gradient descent from the
/// identity. Returns the final distance and `η`.
pub fn gd_distance(i1: &Image, i2: &Image, kind: GroupKind, rcfg: &RefinementConfig) -> Result<(f64, TransformParams)> {
    i1.same_shape(i2)?;
    let render = |eta: &TransformParams| -> Vec<f64> {
        warp_about_center(i1, eta, kind).map(Image::into_pixels).unwrap_or_else(|_| vec![f64::INFINITY; i1.pixels().len()])
    };
    let out = refine_objective(render, i2.pixels(), kind, &TransformParams::identity(), rcfg)?;
    Ok((out.distance, out.eta))
}
