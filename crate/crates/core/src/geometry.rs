//! Parameter-space algebra for the planar transformation groups.
//!
//! Coordinates follow raster order: `x` grows to the right (column index),
//! `y` grows downward (row index). Rotations are counterclockwise in the
//! `(x, y)` frame, i.e. `R_θ = [[cos θ, -sin θ], [sin θ, cos θ]]`.
//!
//! | Group                | Parameters   | Composition                       |
//! |----------------------|--------------|-----------------------------------|
//! | `Translation2D`      | `b`          | `b + b'`                          |
//! | `SpecialEuclidean2D` | `(b, θ)`     | `(b + R_θ b', θ + θ')`            |
//! | `Similarity2D`       | `(b, a, θ)`  | `(b + a R_θ b', a a', θ + θ')`    |

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Tolerance used for algebraic parameter comparisons.
pub const PARAM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKind {
    Translation2D,
    SpecialEuclidean2D,
    Similarity2D,
}

impl GroupKind {
    /// Dimension `P` of the group.
    pub fn dim(self) -> usize {
        match self {
            GroupKind::Translation2D => 2,
            GroupKind::SpecialEuclidean2D => 3,
            GroupKind::Similarity2D => 4,
        }
    }

    pub fn has_rotation(self) -> bool {
        !matches!(self, GroupKind::Translation2D)
    }

    pub fn has_scale(self) -> bool {
        matches!(self, GroupKind::Similarity2D)
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupKind::Translation2D => "translation",
            GroupKind::SpecialEuclidean2D => "se2",
            GroupKind::Similarity2D => "sim2",
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "translation" | "translation2d" | "r2" => Ok(GroupKind::Translation2D),
            "se2" | "se(2)" | "specialeuclidean2d" => Ok(GroupKind::SpecialEuclidean2D),
            "sim2" | "sim(2)" | "similarity2d" => Ok(GroupKind::Similarity2D),
            other => Err(Error::Config(format!("unknown group '{other}'"))),
        }
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid may return TAU itself for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn signed_angle(theta: f64) -> f64 {
    let t = normalize_angle(theta);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

/// Smallest absolute angular difference modulo `period`.
pub fn angle_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// An element of a transformation group: translation `b`, scale `a`, angle `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    pub b: [f64; 2],
    pub a: f64,
    pub theta: f64,
}

impl Default for TransformParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl TransformParams {
    pub const fn identity() -> Self {
        Self {
            b: [0.0, 0.0],
            a: 1.0,
            theta: 0.0,
        }
    }

    /// Builds parameters with the angle normalized into `[0, 2π)`.
    pub fn new(bx: f64, by: f64, a: f64, theta: f64) -> Self {
        Self {
            b: [bx, by],
            a,
            theta: normalize_angle(theta),
        }
    }

    pub fn translation(bx: f64, by: f64) -> Self {
        Self::new(bx, by, 1.0, 0.0)
    }

    pub fn rotation(theta: f64) -> Self {
        Self::new(0.0, 0.0, 1.0, theta)
    }

    pub fn validate(&self, kind: GroupKind) -> Result<()> {
        if !(self.b[0].is_finite() && self.b[1].is_finite() && self.theta.is_finite()) {
            return Err(Error::invalid(format!("non-finite parameters {self}")));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {}", self.a)));
        }
        match kind {
            GroupKind::Translation2D => {
                if (self.a - 1.0).abs() > PARAM_TOL || angle_distance(self.theta, 0.0, TAU) > PARAM_TOL {
                    return Err(Error::invalid(format!(
                        "translation group requires a = 1 and theta = 0, got {self}"
                    )));
                }
            }
            GroupKind::SpecialEuclidean2D => {
                if (self.a - 1.0).abs() > PARAM_TOL {
                    return Err(Error::invalid(format!("SE(2) requires a = 1, got {}", self.a)));
                }
            }
            GroupKind::Similarity2D => {}
        }
        Ok(())
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.approx_eq(&Self::identity(), tol)
    }

    /// Parameter-wise comparison with angles compared modulo `2π`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.b[0] - other.b[0]).abs() <= tol
            && (self.b[1] - other.b[1]).abs() <= tol
            && (self.a - other.a).abs() <= tol
            && angle_distance(self.theta, other.theta, TAU) <= tol
    }

    /// Occam measure used to break ties: `‖b‖ + |log a| + |θ|` with `θ` folded into `(-π, π]`.
    pub fn magnitude(&self) -> f64 {
        self.b[0].hypot(self.b[1]) + self.a.ln().abs() + signed_angle(self.theta).abs()
    }

    /// Local coordinates for the refinement: `(bx, by)`, then `ln a` and/or `θ` when the group has them.
    pub fn to_coords(&self, kind: GroupKind) -> Vec<f64> {
        match kind {
            GroupKind::Translation2D => vec![self.b[0], self.b[1]],
            GroupKind::SpecialEuclidean2D => vec![self.b[0], self.b[1], signed_angle(self.theta)],
            GroupKind::Similarity2D => vec![self.b[0], self.b[1], self.a.ln(), signed_angle(self.theta)],
        }
    }

    pub fn from_coords(coords: &[f64], kind: GroupKind) -> Self {
        debug_assert_eq!(coords.len(), kind.dim());
        match kind {
            GroupKind::Translation2D => Self::translation(coords[0], coords[1]),
            GroupKind::SpecialEuclidean2D => Self::new(coords[0], coords[1], 1.0, coords[2]),
            GroupKind::Similarity2D => Self::new(coords[0], coords[1], coords[2].exp(), coords[3]),
        }
    }
}

impl fmt::Display for TransformParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.b[0], self.b[1], self.a, self.theta)
    }
}

impl FromStr for TransformParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(Error::invalid(format!(
                "expected 'bx by a theta', got '{s}'"
            )));
        }
        let mut v = [0.0; 4];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = field
                .parse()
                .map_err(|_| Error::invalid(format!("bad number '{field}'")))?;
        }
        Ok(Self::new(v[0], v[1], v[2], v[3]))
    }
}

#[inline]
fn rotate(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Group composition `η ∘ η'`.
pub fn compose(eta: &TransformParams, eta_prime: &TransformParams, kind: GroupKind) -> Result<TransformParams> {
    eta.validate(kind)?;
    eta_prime.validate(kind)?;
    Ok(compose_unchecked(eta, eta_prime))
}

/// Composition under the similarity rule, which every supported group embeds into.
pub fn compose_unchecked(eta: &TransformParams, eta_prime: &TransformParams) -> TransformParams {
    let rb = rotate(eta.theta, eta_prime.b);
    TransformParams::new(
        eta.b[0] + eta.a * rb[0],
        eta.b[1] + eta.a * rb[1],
        eta.a * eta_prime.a,
        eta.theta + eta_prime.theta,
    )
}

pub fn inverse(eta: &TransformParams) -> TransformParams {
    let inv_a = 1.0 / eta.a;
    let rb = rotate(-eta.theta, eta.b);
    TransformParams::new(-inv_a * rb[0], -inv_a * rb[1], inv_a, -eta.theta)
}

/// Forward action `x ↦ b + a R_θ x`.
pub fn apply_to_point(eta: &TransformParams, x: [f64; 2]) -> [f64; 2] {
    let r = rotate(eta.theta, x);
    [eta.b[0] + eta.a * r[0], eta.b[1] + eta.a * r[1]]
}

/// Inverse action `x ↦ R_{-θ}(x - b) / a`.
pub fn apply_inverse_to_point(eta: &TransformParams, x: [f64; 2]) -> [f64; 2] {
    let r = rotate(-eta.theta, [x[0] - eta.b[0], x[1] - eta.b[1]]);
    [r[0] / eta.a, r[1] / eta.a]
}

/// Conjugates `eta` by a translation to `center`, so that rotation and scaling
/// act about `center` instead of the origin: returns `C ∘ η ∘ C⁻¹`.
pub fn about_center(eta: &TransformParams, center: [f64; 2]) -> TransformParams {
    let c = TransformParams::translation(center[0], center[1]);
    compose_unchecked(&compose_unchecked(&c, eta), &inverse(&c))
}

/// Inverse of [`about_center`]: expresses an origin-based transform relative to `center`.
pub fn relative_to_center(eta: &TransformParams, center: [f64; 2]) -> TransformParams {
    let c = TransformParams::translation(center[0], center[1]);
    compose_unchecked(&compose_unchecked(&inverse(&c), eta), &c)
}

/// Finite stabilizer subgroup `S_φ` of a mother function.
#[derive(Debug, Clone, PartialEq)]
pub struct Stabilizer {
    elements: Vec<TransformParams>,
}

impl Stabilizer {
    pub fn trivial() -> Self {
        Self {
            elements: vec![TransformParams::identity()],
        }
    }

    /// `{identity, rotation by π}`.
    pub fn half_turn() -> Self {
        Self {
            elements: vec![TransformParams::identity(), TransformParams::rotation(PI)],
        }
    }

    /// Builds a stabilizer from explicit elements, checking that the identity is present and
    /// that the set is closed under composition and inverse.
    pub fn from_elements(elements: Vec<TransformParams>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("stabilizer needs at least the identity"));
        }
        let contains = |t: &TransformParams| elements.iter().any(|e| e.approx_eq(t, 1e-12));
        if !contains(&TransformParams::identity()) {
            return Err(Error::invalid("stabilizer must contain the identity"));
        }
        for x in &elements {
            if !contains(&inverse(x)) {
                return Err(Error::invalid("stabilizer not closed under inverse"));
            }
            for y in &elements {
                if !contains(&compose_unchecked(x, y)) {
                    return Err(Error::invalid("stabilizer not closed under composition"));
                }
            }
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[TransformParams] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Rotational period of the symmetry: `2π / |rotations in S_φ|`.
    pub fn rotation_period(&self) -> f64 {
        TAU / self.elements.len() as f64
    }

    /// Lexicographically smallest member of the coset `γ ∘ S_φ` under (scale, theta, b_y, b_x).
    pub fn canonical(&self, gamma: &TransformParams) -> TransformParams {
        self.elements
            .iter()
            .map(|pi| compose_unchecked(gamma, pi))
            .min_by(|x, y| lex_key(x).partial_cmp(&lex_key(y)).unwrap())
            .unwrap_or(*gamma)
    }

    /// Whether `x` and `y` generate the same atom, i.e. `y ∈ x ∘ S_φ`.
    pub fn same_coset(&self, x: &TransformParams, y: &TransformParams, tol: f64) -> bool {
        self.elements
            .iter()
            .any(|pi| compose_unchecked(x, pi).approx_eq(y, tol))
    }
}

/// Ordering key (scale, theta, b_y, b_x) shared by tie-breaking rules.
pub(crate) fn lex_key(t: &TransformParams) -> (f64, f64, f64, f64) {
    (t.a, t.theta, t.b[1], t.b[0])
}

/// Stabilizer of the anisotropic Gaussian `exp(-(x/ν)² - y²)` inside `kind`.
pub fn stabilizer_of_gaussian(nu: f64, kind: GroupKind) -> Result<Stabilizer> {
    if !(nu >= 1.0) {
        return Err(Error::invalid(format!("anisotropy must be >= 1, got {nu}")));
    }
    if !kind.has_rotation() {
        return Ok(Stabilizer::trivial());
    }
    if (nu - 1.0).abs() < 1e-12 {
        return Err(Error::InfiniteStabilizer);
    }
    Ok(Stabilizer::half_turn())
}
