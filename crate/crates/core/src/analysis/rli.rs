//! Robust linear independence: randomized falsification and the analytic box-dictionary constants.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dictionary::Atom;
use crate::error::{Error, Result};
use crate::imaging::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct RliReport {
    pub k: usize,
    pub epsilon: f64,
    pub alpha: f64,
    /// Largest pair-cancellation measure among directions satisfying the premise; a lower bound
    /// of the smallest admissible `α`. Zero when the premise never fired.
    pub alpha_found: f64,
    pub violated: bool,
    /// Unit-norm coefficients of the worst direction.
    pub witness_coeffs: Vec<f64>,
    pub witness_support: Vec<usize>,
    pub trials: usize,
    /// Number of sampled directions for which `‖Σ aᵢvᵢ‖ < ε‖a‖₂`.
    pub premise_hits: usize,
}

/// `min over pairs with aᵢ, aⱼ ≠ 0 of ‖aᵢvᵢ/‖aᵢvᵢ‖ + aⱼvⱼ/‖aⱼvⱼ‖‖` from a Gram matrix.
pub fn pair_measure(gram: &DMatrix<f64>, a: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if a[i] == 0.0 || a[j] == 0.0 {
                continue;
            }
            let s = a[i].signum() * a[j].signum();
            let c = gram[(i, j)] / (gram[(i, i)] * gram[(j, j)]).sqrt();
            best = best.min((2.0 + 2.0 * s * c).max(0.0).sqrt());
        }
    }
    best
}

/// Unit-norm directions `a` with `‖Σ aᵢvᵢ‖ < ε`: the smallest-eigenvalue eigenvector, plus random
/// combinations inside the eigenspace below `ε²`.
fn premise_directions(gram: &DMatrix<f64>, epsilon: f64, extra: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let eig = SymmetricEigen::new(gram.clone());
    let low: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] < epsilon * epsilon).collect();
    if low.is_empty() {
        return Vec::new();
    }
    let min_k = *low.iter().min_by(|&&x, &&y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y])).unwrap();
    let mut out = vec![eig.eigenvectors.column(min_k).iter().copied().collect::<Vec<f64>>()];
    if low.len() > 1 {
        for _ in 0..extra {
            let mut v = DVector::zeros(gram.nrows());
            for &k in &low {
                v += eig.eigenvectors.column(k) * rng.gen_range(-1.0..1.0);
            }
            let n = v.norm();
            if n > 1e-12 {
                out.push((v / n).iter().copied().collect());
            }
        }
    }
    out
}

fn subset_gram(vectors: &[&[f64]], idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| dot(vectors[idx[r]], vectors[idx[c]]))
}

/// Pair measure of the specific direction `a` on `vectors`, together with whether
/// `‖Σ aᵢvᵢ‖ < ε‖a‖₂`.
pub fn rli_check_direction(vectors: &[&[f64]], a: &[f64], epsilon: f64) -> Result<(bool, f64)> {
    if vectors.len() != a.len() || a.len() < 2 {
        return Err(Error::invalid("direction length must match the family size (at least 2)"));
    }
    let idx: Vec<usize> = (0..a.len()).collect();
    let gram = subset_gram(vectors, &idx);
    let av = DVector::from_column_slice(a);
    let norm = (av.transpose() * &gram * &av)[(0, 0)].max(0.0).sqrt();
    Ok((norm < epsilon * av.norm(), pair_measure(&gram, a)))
}

/// Randomized counterexample search on raw vectors. Subsets are drawn uniformly or, every other
/// trial, from a random window of consecutive indices so that overlapping neighbours are
/// exercised.
pub fn rli_falsify_vectors(vectors: &[&[f64]], k: usize, epsilon: f64, alpha: f64, trials: usize, seed: u64) -> Result<RliReport> {
    if k < 2 {
        return Err(Error::invalid("RLI needs K >= 2"));
    }
    if k > vectors.len() {
        return Err(Error::invalid(format!("K = {k} exceeds the {} available atoms", vectors.len())));
    }
    if !(epsilon > 0.0) || !(alpha > 0.0) {
        return Err(Error::invalid("epsilon and alpha must be positive"));
    }
    let n = vectors.len();
    struct Hit {
        measure: f64,
        coeffs: Vec<f64>,
        support: Vec<usize>,
        count: usize,
    }
    let per_trial: Vec<Hit> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut support: Vec<usize> = if t % 2 == 1 && n > k {
                let width = rng.gen_range(k..=n.min(4 * k));
                let start = rng.gen_range(0..=n - width);
                sample(&mut rng, width, k).into_iter().map(|i| start + i).collect()
            } else {
                sample(&mut rng, n, k).into_vec()
            };
            support.sort_unstable();
            let gram = subset_gram(vectors, &support);
            let mut hit = Hit { measure: 0.0, coeffs: Vec::new(), support: support.clone(), count: 0 };
            for a in premise_directions(&gram, epsilon, 4, &mut rng) {
                hit.count += 1;
                let m = pair_measure(&gram, &a);
                if m > hit.measure || hit.coeffs.is_empty() {
                    hit.measure = m;
                    hit.coeffs = a;
                }
            }
            hit
        })
        .collect();

    let premise_hits = per_trial.iter().map(|h| h.count).sum();
    let worst = per_trial
        .into_iter()
        .filter(|h| h.count > 0)
        .max_by(|x, y| x.measure.total_cmp(&y.measure));
    let (alpha_found, witness_coeffs, witness_support) = match worst {
        Some(h) => (h.measure, h.coeffs, h.support),
        None => (0.0, Vec::new(), Vec::new()),
    };
    Ok(RliReport {
        k,
        epsilon,
        alpha,
        violated: alpha_found > alpha,
        alpha_found,
        witness_coeffs,
        witness_support,
        trials,
        premise_hits,
    })
}

pub fn rli_falsify(atoms: &[Atom], k: usize, epsilon: f64, alpha: f64, trials: usize, seed: u64) -> Result<RliReport> {
    let vectors: Vec<&[f64]> = atoms.iter().map(|a| a.raster.pixels()).collect();
    rli_falsify_vectors(&vectors, k, epsilon, alpha, trials, seed)
}

/// `(α, ε_max)` of the translated-box dictionary: `α = ε√((2/3)(4^K − 1))`, `ε_max = √(3/(4^K − 1))`.
pub fn box_rli_constants(k: usize, epsilon: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let m = 4f64.powi(k as i32) - 1.0;
    let eps_max = (3.0 / m).sqrt();
    if !(epsilon > 0.0 && epsilon < eps_max) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside (0, {eps_max})")));
    }
    Ok((epsilon * (2.0 / 3.0 * m).sqrt(), eps_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fixtures::{example1_family, five_squares};
    use approx::assert_relative_eq;

    #[test]
    fn box_constants() {
        let (a, e) = box_rli_constants(1, 0.5).unwrap();
        assert_relative_eq!(a, 0.5 * 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(e, 1.0, epsilon = 1e-15);
        let (_, e2) = box_rli_constants(2, 0.1).unwrap();
        assert_relative_eq!(e2, 0.2f64.sqrt(), epsilon = 1e-15);
        let (a, _) = box_rli_constants(1, 1.0 - 1e-12).unwrap();
        assert!((a - 2f64.sqrt()).abs() < 1e-9);
        assert!(box_rli_constants(2, 0.5).is_err());
        assert!(box_rli_constants(0, 0.1).is_err());
    }

    #[test]
    fn example1_families() {
        let (good, bad) = example1_family();
        let v: Vec<&[f64]> = good.iter().map(|x| x.as_slice()).collect();
        let r = rli_falsify_vectors(&v, 3, 0.2, 0.2, 50, 1).unwrap();
        assert!(r.premise_hits > 0);
        assert!(!r.violated, "{}", r.alpha_found);
        let v: Vec<&[f64]> = bad.iter().map(|x| x.as_slice()).collect();
        let r = rli_falsify_vectors(&v, 3, 0.2, 0.5, 50, 1).unwrap();
        assert!(r.violated);
        assert!((r.alpha_found - 0.7767).abs() < 1e-3, "{}", r.alpha_found);
        assert!(!rli_falsify_vectors(&v, 3, 0.2, 0.78, 50, 1).unwrap().violated);
    }

    #[test]
    fn five_squares_cancel_without_a_close_pair() {
        let atoms = five_squares(16);
        let v: Vec<&[f64]> = atoms.iter().map(|a| a.pixels()).collect();
        let (fires, m) = rli_check_direction(&v, &[0.5, 0.5, 0.5, 0.5, -1.0], 1e-9).unwrap();
        assert!(fires);
        assert!((m - 1.0).abs() < 1e-12);
        let r = rli_falsify_vectors(&v, 5, 1e-6, 0.9, 4, 3).unwrap();
        assert!(r.violated);
        assert!((r.alpha_found - 1.0).abs() < 1e-6);
        let norm: f64 = r.witness_coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn well_conditioned_subsets_never_fire() {
        // orthonormal vectors: λ_min = 1 ≥ ε²
        let basis: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let v: Vec<&[f64]> = basis.iter().map(|x| x.as_slice()).collect();
        let r = rli_falsify_vectors(&v, 3, 0.9, 0.1, 200, 5).unwrap();
        assert_eq!(r.premise_hits, 0);
        assert_eq!(r.alpha_found, 0.0);
        assert!(rli_falsify_vectors(&v, 1, 0.9, 0.1, 1, 5).is_err());
    }
}
