//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits with a failure status if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use critmetric::balance::{extract_index, solve_critical, uniqueness_path, SolveOptions, SolveStatus};
use critmetric::chow::{convexity_residual, first_variation, path_samples, OneParamSubgroup};
use critmetric::extremal::{
    bergman_density_at_level, extremal_field, futaki, lu_fit, order0_consistency, scalar_curvature,
};
use critmetric::gitcheck::{torus_stable, OrbitStatus, WeightConfiguration};
use critmetric::sections::{density_e, gram, AlgebraicMetric};
use critmetric::weights::{admissible_basis, decompose, IndexVector, SubtorusAction, WeightBlocks};
use critmetric::{PolarizedModel, QuadratureScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn line() -> PolarizedModel {
    PolarizedModel::projective_line()
}

fn square() -> PolarizedModel {
    PolarizedModel::product_of_lines()
}

fn fs(model: &PolarizedModel, m: i64) -> AlgebraicMetric<f64> {
    AlgebraicMetric::fubini_study(model, m).unwrap()
}

/// Balanced states of criterion 1, reused by criterion 4.
fn balanced_line_states() -> Vec<(AlgebraicMetric<f64>, f64, usize, f64)> {
    let q = QuadratureScheme::tensor_with_angular(1, 64, 64).unwrap();
    (2..=8)
        .map(|m| {
            let start = fs(&line(), m).perturbed(0.3, 100 + m as u64, false, None).unwrap();
            let blocks = WeightBlocks::single(start.len());
            let t = Instant::now();
            let r = solve_critical(&start, &blocks, &SolveOptions { tol: 1e-10, ..Default::default() }, &q).unwrap();
            let secs = t.elapsed().as_secs_f64();
            assert_eq!(r.status, SolveStatus::Converged, "m = {m}");
            let e = density_e(&r.state, &blocks, &r.index, &q).unwrap();
            (r.state, e.sup_residual, r.iterations, secs)
        })
        .collect()
}

fn criterion_1(states: &[(AlgebraicMetric<f64>, f64, usize, f64)]) -> Outcome {
    let q = QuadratureScheme::tensor_with_angular(1, 64, 64).unwrap();
    let mut ok = true;
    let mut worst = (0.0f64, 0.0f64, 0usize, 0.0f64);
    for (state, sup, iters, secs) in states {
        let g = gram(state, &q).unwrap();
        let k = state.len();
        let mut dev = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((g.matrix[(i, j)].re - target).abs()).max(g.matrix[(i, j)].im.abs());
            }
        }
        let c = state.density_constant();
        ok &= *sup < 1e-8 && dev < 1e-8 && *iters <= 50 && *secs < 30.0 && (c - (k as f64)).abs() < 1e-12;
        worst = (worst.0.max(*sup), worst.1.max(dev), worst.2.max(*iters), worst.3.max(*secs));
    }
    check(
        ok,
        format!(
            "m=2..8: max sup|E-C| {:.2e}, max |G-I| {:.2e}, max iterations {}, max time {:.2}s",
            worst.0, worst.1, worst.2, worst.3
        ),
    )
}

fn criterion_2() -> Outcome {
    let q = QuadratureScheme::tensor(1, 64).unwrap();
    let raw = fs(&line(), 2).raw_gram(&q).unwrap();
    // Beta integrals B(u + 1, m - u + 1) = u! (m - u)! / (m + 1)!
    let fact = |n: u64| (1..=n).product::<u64>() as f64;
    let oracle: Vec<f64> = (0..=2u64).map(|u| fact(u) * fact(2 - u) / fact(3)).collect();
    let scale = raw[(0, 0)].re / oracle[0];
    let mut err = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { scale * oracle[i] } else { 0.0 };
            err = err.max((raw[(i, j)] - nalgebra::Complex::new(target, 0.0)).norm());
        }
    }
    check(err < 1e-9, format!("max deviation from scaled diag(1/3, 1/6, 1/3): {err:.2e} (scale {scale:.12})"))
}

fn traceless_integers(rng: &mut ChaCha8Rng, k: usize, range: i64) -> Vec<i64> {
    loop {
        let mut g: Vec<i64> = (0..k - 1).map(|_| rng.random_range(-range..=range)).collect();
        let s: i64 = g.iter().sum();
        g.push(-s);
        if g.iter().any(|&v| v != 0) {
            return g;
        }
    }
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid: Vec<f64> = (0..=16).map(|i| -2.0 + 0.25 * i as f64).collect();
    let q1 = QuadratureScheme::tensor_with_angular(1, 48, 48).unwrap();
    let q2 = QuadratureScheme::tensor(2, 32).unwrap();
    let (mut min_second, mut max_identity) = (f64::INFINITY, 0.0f64);
    for case in 0..100 {
        let (model, m, q, diagonal) = if case < 50 {
            (line(), rng.random_range(1..=6), &q1, false)
        } else {
            (square(), rng.random_range(1..=3), &q2, true)
        };
        let state = fs(&model, m).perturbed(0.3, 1000 + case, diagonal, None).unwrap();
        let blocks = WeightBlocks::single(state.len());
        let gamma = traceless_integers(&mut rng, state.len(), 2);
        let lambda = OneParamSubgroup::special(&gamma, &blocks).unwrap();
        let path = path_samples(&state, None, &lambda, &grid, q).unwrap();
        let rep = convexity_residual(&path).unwrap();
        min_second = min_second.min(rep.residual).min(rep.min_second);
        max_identity = max_identity.max(rep.identity_error);
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        min_second >= -1e-6 && max_identity < 1e-5 && secs < 300.0,
        format!("100 paths: min f'' {min_second:.3e}, max identity error {max_identity:.2e}, {secs:.1}s"),
    )
}

fn criterion_4(states: &[(AlgebraicMetric<f64>, f64, usize, f64)]) -> Outcome {
    let q = QuadratureScheme::tensor_with_angular(1, 64, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_ratio = 0.0f64;
    for (state, ..) in states {
        let k = state.len();
        let blocks = WeightBlocks::single(k);
        let g = gram(state, &q).unwrap();
        let x = admissible_basis(&g, &blocks, &IndexVector::uniform(&blocks)).unwrap().transform;
        let bound = 1e-6 * 2.0 * state.level() as f64 * state.volume();
        for _ in 0..20 {
            let mut gamma: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mean = gamma.iter().sum::<f64>() / k as f64;
            gamma.iter_mut().for_each(|v| *v -= mean);
            let lambda = OneParamSubgroup::new(gamma);
            let f = first_variation(state, Some(&x), &lambda, &q).unwrap();
            worst_ratio = worst_ratio.max(f.abs() / bound);
        }
    }
    check(worst_ratio < 1.0, format!("max |f'(0)| / (1e-6 (n+1) m^n Vol) = {worst_ratio:.3e} over 7 x 20 directions"))
}

fn criterion_5() -> Outcome {
    let q = QuadratureScheme::tensor_with_angular(2, 24, 12).unwrap();
    let model = square();
    let blocks = decompose(&fs(&model, 2).sections().clone(), &SubtorusAction::new(2, vec![vec![0, 1]]).unwrap());
    let start = fs(&model, 2).perturbed(0.3, 5, false, Some(&blocks)).unwrap();
    let options = SolveOptions { tol: 1e-10, track_energy: false, ..Default::default() };
    let r = solve_critical(&start, &blocks, &options, &q).unwrap();
    let b = extract_index(&r.state, &blocks, &q, 1e-8).unwrap();
    let spread = b.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - b.values.iter().cloned().fold(f64::INFINITY, f64::min);
    check(
        r.status == SolveStatus::Converged && spread < 1e-6,
        format!("{:?} after {} iterations, b = {:?}, spread {spread:.2e}", r.status, r.iterations, b.values),
    )
}

/// Direction scan over integer directions with entries in [-7, 7].
fn scan_oracle(w: &[Vec<i64>]) -> OrbitStatus {
    if w.iter().all(|v| v[0] == 0 && v[1] == 0) {
        return OrbitStatus::Fixed;
    }
    for a in -7i64..=7 {
        for b in -7i64..=7 {
            if a == 0 && b == 0 {
                continue;
            }
            let vals: Vec<i64> = w.iter().map(|v| v[0] * a + v[1] * b).collect();
            if vals.iter().all(|&x| x >= 0) && vals.iter().any(|&x| x > 0) {
                return OrbitStatus::NotClosed;
            }
        }
    }
    OrbitStatus::Closed
}

fn cross(a: &[i64], b: &[i64]) -> i64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Relative-interior test by small positive combinations (Steinitz in the
/// plane: triangles, or a segment through 0 with points on both sides).
fn hull_oracle(w: &[Vec<i64>]) -> OrbitStatus {
    let nz: Vec<&Vec<i64>> = w.iter().filter(|v| v[0] != 0 || v[1] != 0).collect();
    if nz.is_empty() {
        return OrbitStatus::Fixed;
    }
    let collinear = nz.iter().all(|v| cross(v, nz[0]) == 0);
    let opposite = |a: &Vec<i64>, b: &Vec<i64>| cross(a, b) == 0 && a[0] * b[0] + a[1] * b[1] < 0;
    if collinear {
        let any_opposite = nz.iter().any(|a| nz.iter().any(|b| opposite(a, b)));
        return if any_opposite { OrbitStatus::Closed } else { OrbitStatus::NotClosed };
    }
    let n = nz.len();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let (a, b, c) = (nz[i], nz[j], nz[k]);
                let (s1, s2, s3) = (cross(a, b), cross(b, c), cross(c, a));
                if (s1 > 0 && s2 > 0 && s3 > 0) || (s1 < 0 && s2 < 0 && s3 < 0) {
                    return OrbitStatus::Closed;
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if !opposite(nz[i], nz[j]) {
                continue;
            }
            let left = nz.iter().any(|c| cross(nz[i], c) > 0);
            let right = nz.iter().any(|c| cross(nz[i], c) < 0);
            if left && right {
                return OrbitStatus::Closed;
            }
        }
    }
    OrbitStatus::NotClosed
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut disagreements = 0;
    let mut counts = [0usize; 3];
    for _ in 0..200 {
        let len = rng.random_range(1..=8);
        let w: Vec<Vec<i64>> = (0..len).map(|_| vec![rng.random_range(-5..=5), rng.random_range(-5..=5)]).collect();
        let v = torus_stable(&WeightConfiguration::new(w.clone()).unwrap()).status;
        if v != scan_oracle(&w) || v != hull_oracle(&w) {
            disagreements += 1;
        }
        counts[match v {
            OrbitStatus::Closed => 0,
            OrbitStatus::NotClosed => 1,
            OrbitStatus::Fixed => 2,
        }] += 1;
    }
    check(
        disagreements == 0,
        format!(
            "200 configurations: {disagreements} disagreements (closed {}, not closed {}, fixed {})",
            counts[0], counts[1], counts[2]
        ),
    )
}

fn criterion_7() -> Outcome {
    let q = QuadratureScheme::tensor(1, 48).unwrap();
    let levels = [8usize, 16, 24, 32];
    let state = fs(&line(), 2).perturbed(0.15, 7, true, None).unwrap();
    let curv = scalar_curvature(&state, &q).unwrap();
    let fit = lu_fit(&line(), &state, &levels, &q).unwrap();
    let good = fit
        .a1
        .iter()
        .zip(&curv.sigma)
        .filter(|(a, s)| ((*a - *s / 2.0) / (*s / 2.0)).abs() < 0.05)
        .count();
    let frac = good as f64 / fit.a1.len() as f64;
    let base = fs(&line(), 1);
    let mut exact = 0.0f64;
    for &m in &levels {
        let rho = bergman_density_at_level(&line(), &base, m, &q).unwrap();
        let target = 1.0 + 1.0 / m as f64;
        exact = exact.max(rho.values.iter().map(|v| (v - target).abs()).fold(0.0, f64::max));
    }
    check(
        frac >= 0.95 && exact < 1e-12,
        format!("perturbed: {good}/{} nodes within 5%; Fubini-Study: max |rho_m - 1 - q| = {exact:.2e}", fit.a1.len()),
    )
}

fn criterion_8() -> Outcome {
    let q1 = QuadratureScheme::tensor(1, 48).unwrap();
    let q2 = QuadratureScheme::tensor(2, 24).unwrap();
    let mut detail = Vec::new();
    let mut ok = true;
    for (model, q, alpha) in [(line(), &q1, 1.0), (square(), &q2, 2.0)] {
        let state = fs(&model, 1);
        let data = extremal_field(&state, q).unwrap();
        let fmax = (0..model.dim())
            .map(|a| {
                let mut y = vec![0.0; model.dim()];
                y[a] = 1.0;
                futaki(&state, &y, q).unwrap().abs()
            })
            .fold(0.0, f64::max);
        let order0 = order0_consistency(&model, &state, &[8, 16, 32], q).unwrap();
        ok &= fmax < 1e-6 && data.field_norm() < 1e-6 && (data.alpha0 - alpha).abs() < 1e-4 && order0.bounded;
        detail.push(format!(
            "n={}: |F| {fmax:.1e}, |V| {:.1e}, alpha0 {:.8}, residual/q^2 {:?}",
            model.dim(),
            data.field_norm(),
            data.alpha0,
            order0.scaled.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ));
    }
    check(ok, detail.join("; "))
}

fn criterion_9() -> Outcome {
    let q = QuadratureScheme::tensor(1, 48).unwrap();
    let mut ok = true;
    let mut worst = 0.0f64;
    for m in 2..=6 {
        for seed in 0..3 {
            let state = fs(&line(), m).perturbed(0.5, seed, true, None).unwrap();
            let blocks = decompose(state.sections(), &SubtorusAction::full(1));
            let r = solve_critical(&state, &blocks, &SolveOptions { tol: 1e-12, ..Default::default() }, &q).unwrap();
            ok &= r.iterations == 0 && r.status == SolveStatus::Converged && r.residuals[0] < 1e-12;
            worst = worst.max(r.residuals[0]);
        }
    }
    check(ok, format!("15 diagonal states: all critical at iteration 0, max residual {worst:.2e}"))
}

fn criterion_10() -> Outcome {
    let q = QuadratureScheme::tensor_with_angular(1, 64, 64).unwrap();
    let blocks = WeightBlocks::single(5);
    let solve = |seed: u64| {
        let start = fs(&line(), 4).perturbed(0.4, seed, false, None).unwrap();
        solve_critical(&start, &blocks, &SolveOptions { tol: 1e-12, max_iter: 100, ..Default::default() }, &q)
            .unwrap()
            .state
    };
    let (a, b) = (solve(21), solve(22));
    let r = uniqueness_path(&a, &b, &blocks, &IndexVector::uniform(&blocks), &q, 1e-8).unwrap();
    let spread = r.exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - r.exponents.iter().cloned().fold(f64::INFINITY, f64::min);
    check(
        r.max_abs_second < 1e-5 && (r.d0 - r.d1).abs() < 1e-7,
        format!(
            "max |f''| {:.2e}, |d(0) - d(1)| {:.2e}, path exponent spread {spread:.3}",
            r.max_abs_second,
            (r.d0 - r.d1).abs()
        ),
    )
}

fn report(id: usize, outcome: &Outcome, secs: f64) -> bool {
    match outcome {
        Ok(d) => println!("criterion {id:2}: PASS ({secs:.1}s) {d}"),
        Err(d) => println!("criterion {id:2}: FAIL ({secs:.1}s) {d}"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    // optional criterion numbers select a subset; cargo's own flags are ignored
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: usize| only.is_empty() || only.contains(&id);
    let mut results = Vec::new();
    if wanted(1) || wanted(4) {
        let t = Instant::now();
        let states = balanced_line_states();
        let setup = t.elapsed().as_secs_f64();
        if wanted(1) {
            let t = Instant::now();
            let outcome = criterion_1(&states);
            results.push(report(1, &outcome, setup + t.elapsed().as_secs_f64()));
        }
        if wanted(4) {
            let t = Instant::now();
            let outcome = criterion_4(&states);
            results.push(report(4, &outcome, t.elapsed().as_secs_f64()));
        }
    }
    let rest: [(usize, fn() -> Outcome); 8] = [
        (2, criterion_2),
        (3, criterion_3),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    for (id, f) in rest {
        if wanted(id) {
            let t = Instant::now();
            let outcome = f();
            results.push(report(id, &outcome, t.elapsed().as_secs_f64()));
        }
    }
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed} of {} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
