//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero when
//! any criterion fails. Pass criterion numbers as arguments to run a subset.

use std::f64::consts::{PI, SQRT_2};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsereg::analysis::fixtures::{example1_family, five_squares};
use sparsereg::analysis::{
    box_rli_constants, estimate_rho, gaussian_distance, oracle_distance, rli_check_direction, rli_falsify, rli_falsify_vectors,
    OracleGrid, RhoGrid,
};
use sparsereg::dictionary::{rasterize_atom, Dictionary, DictionaryConfig};
use sparsereg::geometry::{about_center, apply_to_point, compose, inverse, GroupKind, TransformParams};
use sparsereg::harness::{
    run_aniso_sweep, run_classify, run_scale_step_sweep, run_transform_errors, sweep_trends, synthetic_object, ExperimentId,
    ExperimentSpec, Method,
};
use sparsereg::imaging::{encode_pgm, inner_product, l2_norm, parse_pgm, warp_about_center, Image};
use sparsereg::registration::{register, RefinementConfig};
use sparsereg::sparse::{nmp, transform_approx, SparseApprox};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sim2(w: usize) -> Arc<DictionaryConfig> {
    Arc::new(DictionaryConfig::gaussian(GroupKind::Similarity2D, 4.0, w, w).unwrap().with_scales(vec![1.0, SQRT_2, 2.0]))
}

/// Exact recovery on lattice-preserving transformations.
fn criterion_1() -> Outcome {
    let cfg = sim2(48);
    let rot = cfg.rot_step;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for trial in 0..20 {
        // a·R_θ maps the integer lattice onto itself for a = 1, θ ∈ (π/2)ℤ and a = √2, θ ∈ π/4 + (π/2)ℤ
        let quarter = rng.gen_range(0..4) as f64 * PI / 2.0;
        let (a, theta, atom_scales) = if rng.gen_bool(0.5) {
            (1.0, quarter, vec![1.0, SQRT_2, 2.0])
        } else {
            (SQRT_2, quarter + PI / 4.0, vec![1.0, SQRT_2])
        };
        let eta0 = TransformParams::new(rng.gen_range(-3..=3) as f64, rng.gen_range(-3..=3) as f64, a, theta);
        let eta0 = about_center(&eta0, [24.0, 24.0]);
        let mut coeffs = Vec::new();
        let mut supports = Vec::new();
        for _ in 0..3 {
            coeffs.push(rng.gen_range(0.3..1.5));
            supports.push(TransformParams::new(
                rng.gen_range(18..=30) as f64,
                rng.gen_range(18..=30) as f64,
                atom_scales[rng.gen_range(0..atom_scales.len())],
                rng.gen_range(0..8) as f64 * rot,
            ));
        }
        let p = SparseApprox::new(Arc::clone(&cfg), coeffs, supports).unwrap();
        let q = transform_approx(&p, &eta0).unwrap();
        let res = register(&p, &q, false, &RefinementConfig::default()).unwrap();
        let stab = cfg.stabilizer().unwrap();
        let same = res.eta_hat.approx_eq(&eta0, 1e-6) || stab.same_coset(&res.eta_hat, &eta0, 1e-6);
        worst = worst.max(res.d_a);
        if res.d_a > 1e-6 || !same {
            failures.push(format!("trial {trial}: d_a {:.2e}, eta {} vs {}", res.d_a, res.eta_hat, eta0));
        }
    }
    check(failures.is_empty(), format!("20 patterns, max d_a {worst:.1e} {}", failures.join("; ")))
}

fn random_params(rng: &mut ChaCha8Rng, kind: GroupKind) -> TransformParams {
    let mut t = TransformParams::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), 1.0, 0.0);
    if kind.has_scale() {
        t.a = rng.gen_range(0.5..2.0);
    }
    if kind.has_rotation() {
        t.theta = rng.gen_range(0.0..2.0 * PI);
    }
    t
}

/// Group axioms, action homomorphism, warp near-unitarity, PGM round trip and Gram checks.
fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut notes = Vec::new();
    for kind in [GroupKind::Translation2D, GroupKind::SpecialEuclidean2D, GroupKind::Similarity2D] {
        for _ in 0..200 {
            let (x, y, z) = (random_params(&mut rng, kind), random_params(&mut rng, kind), random_params(&mut rng, kind));
            let lhs = compose(&compose(&x, &y, kind).unwrap(), &z, kind).unwrap();
            let rhs = compose(&x, &compose(&y, &z, kind).unwrap(), kind).unwrap();
            if !lhs.approx_eq(&rhs, 1e-9) {
                notes.push(format!("associativity {kind:?}"));
            }
            let id = TransformParams::identity();
            if !compose(&x, &id, kind).unwrap().approx_eq(&x, 1e-9) || !compose(&id, &x, kind).unwrap().approx_eq(&x, 1e-9) {
                notes.push(format!("identity {kind:?}"));
            }
            if !compose(&x, &inverse(&x), kind).unwrap().is_identity(1e-9) || !compose(&inverse(&x), &x, kind).unwrap().is_identity(1e-9) {
                notes.push(format!("inverse {kind:?}"));
            }
            let pt = [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)];
            let a = apply_to_point(&compose(&x, &y, kind).unwrap(), pt);
            let b = apply_to_point(&x, apply_to_point(&y, pt));
            if (a[0] - b[0]).abs() > 1e-9 || (a[1] - b[1]).abs() > 1e-9 {
                notes.push(format!("homomorphism {kind:?}"));
            }
        }
    }

    let blob = Image::from_fn(64, 64, |x, y| {
        let dx = (x as f64 - 31.5) / 6.0;
        let dy = (y as f64 - 31.5) / 3.0;
        (-(dx * dx + dy * dy)).exp()
    });
    let norm = l2_norm(&blob);
    let mut worst_warp = 0.0f64;
    for _ in 0..50 {
        let eta = TransformParams::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(0.8..1.25), rng.gen_range(0.0..2.0 * PI));
        let w = warp_about_center(&blob, &eta, GroupKind::Similarity2D).unwrap();
        worst_warp = worst_warp.max((l2_norm(&w) / norm - 1.0).abs());
    }
    if worst_warp > 0.02 {
        notes.push(format!("warp norm deviation {worst_warp:.4}"));
    }

    for _ in 0..20 {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let img = Image::from_fn(w, h, |_, _| rng.gen_range(0..=255) as f64 / 255.0);
        let bytes = encode_pgm(&img);
        let back = parse_pgm(&bytes).unwrap();
        if encode_pgm(&back) != bytes || back != img {
            notes.push("pgm round trip".into());
        }
    }

    let dict = Dictionary::new(DictionaryConfig::gaussian(GroupKind::Similarity2D, 4.0, 24, 24).unwrap().with_scales(vec![1.0, SQRT_2])).unwrap();
    let picks: Vec<usize> = (0..40).map(|_| rng.gen_range(0..dict.len())).collect();
    let atoms: Vec<_> = picks.iter().map(|&i| dict.atom(i).unwrap()).collect();
    let gram = DMatrix::from_fn(atoms.len(), atoms.len(), |r, c| inner_product(&atoms[r].raster, &atoms[c].raster).unwrap());
    for r in 0..atoms.len() {
        for c in 0..atoms.len() {
            if gram[(r, c)].abs() > (gram[(r, r)] * gram[(c, c)]).sqrt() + 1e-12 {
                notes.push("cauchy-schwarz".into());
            }
        }
    }
    let min_eig = SymmetricEigen::new(gram.clone()).eigenvalues.min();
    if min_eig < -1e-9 || (&gram - gram.transpose()).abs().max() > 1e-12 {
        notes.push(format!("gram not symmetric psd ({min_eig:.2e})"));
    }
    notes.dedup();
    check(notes.is_empty(), format!("max warp norm deviation {worst_warp:.4}, min gram eigenvalue {min_eig:.2e} {}", notes.join("; ")))
}

/// Residual trace, coefficient positivity and exact small recoveries.
fn criterion_3() -> Outcome {
    let cfg = DictionaryConfig::gaussian(GroupKind::Similarity2D, 4.0, 32, 32).unwrap().with_scales(vec![1.0, SQRT_2, 2.0]);
    let dict = Dictionary::new(cfg).unwrap();
    let mut notes = Vec::new();
    let mut worst_pyth = 0.0f64;
    for seed in 0..5 {
        let img = synthetic_object(32, seed);
        let out = nmp(&img, 12, &dict, 0.0).unwrap();
        if !out.approx.coeffs.iter().all(|&c| c > 0.0) {
            notes.push("nonpositive coefficient".into());
        }
        for (i, s) in out.steps.iter().enumerate() {
            let (before, after) = (out.residual_norms[i], out.residual_norms[i + 1]);
            if after > before {
                notes.push("residual increased".into());
            }
            worst_pyth = worst_pyth.max((before * before - after * after - s.correlation * s.correlation).abs());
        }
    }
    if worst_pyth > 1e-9 {
        notes.push(format!("pythagorean gap {worst_pyth:.2e}"));
    }

    let g = TransformParams::new(13.0, 17.0, SQRT_2, 5.0 * PI / 8.0);
    let single = rasterize_atom(&g, dict.config()).unwrap().raster.scaled(0.8);
    let out = nmp(&single, 1, &dict, 0.0).unwrap();
    if !(out.approx.len() == 1 && out.approx.supports[0].approx_eq(&g, 1e-9) && (out.approx.coeffs[0] - 0.8).abs() < 1e-6) {
        notes.push("single atom not recovered".into());
    }

    let g1 = TransformParams::new(7.0, 16.0, 1.0, PI / 2.0);
    let g2 = TransformParams::new(24.0, 16.0, 1.0, PI / 2.0);
    let a1 = rasterize_atom(&g1, dict.config()).unwrap().raster;
    let a2 = rasterize_atom(&g2, dict.config()).unwrap().raster;
    if inner_product(&a1, &a2).unwrap() != 0.0 {
        notes.push("test atoms overlap".into());
    }
    let out = nmp(&a1.scaled(1.5).add(&a2).unwrap(), 2, &dict, 0.0).unwrap();
    let ok = out.approx.len() == 2
        && out.approx.supports[0].approx_eq(&g1, 1e-9)
        && out.approx.supports[1].approx_eq(&g2, 1e-9)
        && (out.approx.coeffs[0] - 1.5).abs() < 1e-9
        && (out.approx.coeffs[1] - 1.0).abs() < 1e-9;
    if !ok {
        notes.push("orthogonal pair not recovered".into());
    }
    notes.dedup();
    check(notes.is_empty(), format!("max pythagorean gap {worst_pyth:.1e} {}", notes.join("; ")))
}

/// The registration error against the bound `α̂·ρ̂·min(‖c‖₁, ‖d‖₁)`, where `α̂` is the smallest
/// distance between an atom of `U(η₀)p` and an atom of `q`.
fn criterion_4() -> Outcome {
    let cfg = sim2(40);
    let nu = 4.0;
    let rho = estimate_rho(&cfg, &cfg.stabilizer().unwrap(), &RhoGrid::default(), true).unwrap().rho;
    let center = [19.5, 19.5];
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    let mut max_gap = 0.0f64;
    for i in 0..50 {
        let k = i % 3 + 1;
        let mut coeffs = Vec::new();
        let mut supports = Vec::new();
        for _ in 0..k {
            coeffs.push(rng.gen_range(0.5..1.5));
            supports.push(TransformParams::new(
                center[0] + rng.gen_range(-6.0..6.0),
                center[1] + rng.gen_range(-6.0..6.0),
                cfg.scales[rng.gen_range(0..cfg.scales.len())],
                rng.gen_range(0.0..PI),
            ));
        }
        let p = SparseApprox::new(Arc::clone(&cfg), coeffs, supports).unwrap();
        let eta = TransformParams::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-0.25f64..0.25).exp2(), rng.gen_range(0.0..2.0 * PI));
        let moved = transform_approx(&p, &about_center(&eta, center)).unwrap();
        // innovation: every atom and coefficient of q is perturbed
        let d_coeffs: Vec<f64> = moved.coeffs.iter().map(|c| c * rng.gen_range(0.8..1.2)).collect();
        let d_supports: Vec<TransformParams> = moved
            .supports
            .iter()
            .map(|g| {
                TransformParams::new(
                    g.b[0] + rng.gen_range(-1.0..1.0),
                    g.b[1] + rng.gen_range(-1.0..1.0),
                    g.a * rng.gen_range(-0.15f64..0.15).exp2(),
                    g.theta + rng.gen_range(-0.2..0.2),
                )
            })
            .collect();
        let q = SparseApprox::new(Arc::clone(&cfg), d_coeffs, d_supports).unwrap();

        let d_a = register(&p, &q, false, &RefinementConfig::default()).unwrap().d_a;
        let (d, eta0) = oracle_distance(&p, &q, &OracleGrid::default()).unwrap();
        let mut alpha = f64::INFINITY;
        for g in &p.supports {
            let chi = compose(&eta0, g, GroupKind::Similarity2D).unwrap();
            for delta in &q.supports {
                alpha = alpha.min(gaussian_distance(nu, &chi, delta));
            }
        }
        let bound = alpha * rho * p.l1_norm().min(q.l1_norm());
        let gap = d_a - d;
        max_gap = max_gap.max(gap);
        if gap > 1e-9 {
            worst_ratio = worst_ratio.max(gap / bound);
        }
        // 1e-9 absorbs rounding when the oracle lands exactly on a candidate
        if gap > bound + 1e-9 {
            violations += 1;
        }
    }
    check(
        violations == 0,
        format!("50 instances, rho {rho:.3}, {violations} violations, max d_a - d {max_gap:.3}, max (d_a - d)/bound {worst_ratio:.3}"),
    )
}

/// Falsification against the box-dictionary constants and the two small fixtures.
fn criterion_5() -> Outcome {
    let mut notes = Vec::new();
    let mut summary = Vec::new();
    let atoms = Dictionary::new(DictionaryConfig::box1d(512, 768, 1)).unwrap().atoms().unwrap();
    for k in [2, 3, 4] {
        let (_, eps_max) = box_rli_constants(k, 1e-9).unwrap();
        let eps = 0.5 * eps_max;
        let (alpha, _) = box_rli_constants(k, eps).unwrap();
        let r = rli_falsify(&atoms, k, eps, alpha, 10_000, 500 + k as u64).unwrap();
        summary.push(format!("K={k}: alpha {alpha:.3} found {:.3} ({} hits)", r.alpha_found, r.premise_hits));
        if r.violated {
            notes.push(format!("box K={k} violated"));
        }
    }

    let (good, bad) = example1_family();
    let v: Vec<&[f64]> = good.iter().map(|x| x.as_slice()).collect();
    let r = rli_falsify_vectors(&v, 3, 0.2, 0.2, 100, 1).unwrap();
    if r.violated || r.premise_hits == 0 {
        notes.push("example (e1, e2, v) should be RLI with alpha 0.2".into());
    }
    let v: Vec<&[f64]> = bad.iter().map(|x| x.as_slice()).collect();
    let r = rli_falsify_vectors(&v, 3, 0.2, 0.5, 100, 1).unwrap();
    summary.push(format!("(e1, e2, v') alpha_found {:.3}", r.alpha_found));
    if !r.violated || r.alpha_found >= 0.78 + 5e-3 {
        notes.push("example (e1, e2, v') should need alpha about 0.78".into());
    }

    let squares = five_squares(16);
    let v: Vec<&[f64]> = squares.iter().map(|a| a.pixels()).collect();
    let (fires, m) = rli_check_direction(&v, &[0.5, 0.5, 0.5, 0.5, -1.0], 1e-9).unwrap();
    summary.push(format!("five squares pair measure {m:.3}"));
    if !(fires && (m - 1.0).abs() < 1e-9 && rli_falsify_vectors(&v, 5, 1e-6, 0.99, 4, 3).unwrap().violated) {
        notes.push("five squares should violate alpha < 1".into());
    }
    check(notes.is_empty(), format!("{} {}", summary.join(", "), notes.join("; ")))
}

/// Transformation inconsistency of translation-only and anisotropic dictionaries.
fn criterion_6() -> Outcome {
    let t = DictionaryConfig::gaussian(GroupKind::Translation2D, 4.0, 32, 32).unwrap();
    let rho_t = estimate_rho(&t, &t.stabilizer().unwrap(), &RhoGrid::default(), true).unwrap().rho;
    let nus = [1.5, 2.0, 4.0, 8.0, 16.0];
    let mut rhos = Vec::new();
    for nu in nus {
        let cfg = DictionaryConfig::gaussian(GroupKind::SpecialEuclidean2D, nu, 32, 32).unwrap();
        rhos.push(estimate_rho(&cfg, &cfg.stabilizer().unwrap(), &RhoGrid::default(), true).unwrap().rho);
    }
    let argmin = (0..rhos.len()).min_by(|&a, &b| rhos[a].total_cmp(&rhos[b])).unwrap();
    let interior = argmin > 0 && argmin < rhos.len() - 1;
    // U-shape: nonincreasing up to the minimum and nondecreasing after it
    let u = rhos[..=argmin].windows(2).all(|w| w[1] <= w[0]) && rhos[argmin..].windows(2).all(|w| w[1] >= w[0]);
    let ok = (1.0..=1.05).contains(&rho_t) && interior && u;
    let curve: Vec<String> = nus.iter().zip(&rhos).map(|(n, r)| format!("{n}:{r:.3}")).collect();
    check(ok, format!("translation rho {rho_t:.4}, rho(nu) {}", curve.join(" ")))
}

/// Opposite trends of approximation and registration errors in both sweeps.
fn criterion_7() -> Outcome {
    let aniso = run_aniso_sweep(&ExperimentSpec::new(ExperimentId::AnisoSweep).unwrap()).unwrap();
    let scale = run_scale_step_sweep(&ExperimentSpec::new(ExperimentId::ScaleStepSweep).unwrap()).unwrap();
    let (a1, r1) = sweep_trends(&aniso).unwrap();
    let (a2, r2) = sweep_trends(&scale).unwrap();
    let opposite = |a: f64, r: f64| a * r < 0.0 && a.abs() >= 0.7 && r.abs() >= 0.7;
    check(
        opposite(a1, r1) && opposite(a2, r2),
        format!("anisotropy spearman approx {a1:+.3} registration {r1:+.3}; scale step approx {a2:+.3} registration {r2:+.3}"),
    )
}

fn transform_error_row() -> [f64; 6] {
    let mut spec = ExperimentSpec::new(ExperimentId::TransformErrors).unwrap();
    spec.k = vec![10];
    spec.trials = 30;
    let table = run_transform_errors(&spec).unwrap();
    let col = |n: &str| table.column(n).unwrap()[0];
    [
        col("translation"),
        col("scale"),
        col("rotation_deg"),
        col("translation_refined"),
        col("scale_refined"),
        col("rotation_deg_refined"),
    ]
}

/// Refined transformation errors at K = 10.
fn criterion_8(e: &[f64; 6]) -> Outcome {
    check(
        e[3] <= 3.0 && e[4] <= 0.05 && e[5] <= 15.0,
        format!("30 trials, refined errors {:.3} px, {:.4} scale, {:.2} deg", e[3], e[4], e[5]),
    )
}

/// Refinement lowers every error component.
fn criterion_9(e: &[f64; 6]) -> Outcome {
    check(
        e[3] < e[0] && e[4] < e[1] && e[5] < e[2],
        format!(
            "translation {:.3} -> {:.3} px, scale {:.4} -> {:.4}, rotation {:.2} -> {:.2} deg",
            e[0], e[3], e[1], e[4], e[2], e[5]
        ),
    )
}

/// Nearest-neighbour digit classification under random similarity transformations.
fn criterion_10() -> Outcome {
    let mut spec = ExperimentSpec::new(ExperimentId::Classify).unwrap();
    spec.data_dir = Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data"));
    spec.train_per_class = 20;
    spec.test_per_class = 20;
    spec.k = vec![10];
    let out = run_classify(&spec).unwrap();
    let acc = |m: Method| out.accuracy.iter().find(|x| x.0 == m).unwrap().1;
    let (e, t, g, p) = (acc(Method::Euclidean), acc(Method::Tangent), acc(Method::GradientDescent), acc(Method::Proposed));
    check(
        p >= e + 0.30 && e < t && t < p,
        format!("accuracy euclidean {:.1}%, tangent {:.1}%, gradient descent {:.1}%, proposed {:.1}%", 100.0 * e, 100.0 * t, 100.0 * g, 100.0 * p),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut failed = Vec::new();
    let mut report = |n: usize, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n:>2}: PASS ({secs:.1}s) {d}"),
            Err(d) => {
                println!("criterion {n:>2}: FAIL ({secs:.1}s) {d}");
                failed.push(n);
            }
        }
    };
    let criteria: [(usize, fn() -> Outcome); 7] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5), (6, criterion_6), (7, criterion_7)];
    for (n, f) in criteria {
        if run(n) {
            let s = Instant::now();
            report(n, s, f());
        }
    }
    if run(8) || run(9) {
        let s = Instant::now();
        let errors = transform_error_row();
        if run(8) {
            report(8, s, criterion_8(&errors));
        }
        if run(9) {
            report(9, s, criterion_9(&errors));
        }
    }
    if run(10) {
        let s = Instant::now();
        report(10, s, criterion_10());
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
