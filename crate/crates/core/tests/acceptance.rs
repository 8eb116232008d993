//! Acceptance checks, one PASS/FAIL line each.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use poslab::assembly::{assemble, Grid};
use poslab::catalog::{self, Expected};
use poslab::coefficient::{Bc, BoxDomain, EllipticSystem, MatrixField, PolyMatrix};
use poslab::expm::expm;
use poslab::lab::{
    decide_decoupling, default_probe_points, observed_order, probe, Decision, DecisionOptions, ProbeOptions, Witness,
};
use poslab::multop::{
    commutes_with_indicators, dominated_on_basis, find_witness, is_multiplication, trace_duality_bound,
    trace_duality_residual,
};
use poslab::poly::Polynomial;
use poslab::semigroup::{positivity_scan, Factorization, Generator, ScanVerdict};
use poslab::tents::{build_test_pair, interaction_matrix};
use poslab::{CMat, C64};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn tents() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for d in 2..=4 {
        let pts: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..d).map(|_| rng.random_range(-1.05..1.05)).collect())
            .collect();
        for tau in [-3.0, -1.0, 0.0, 1.0, 2.0] {
            for kt in 0..d {
                for lt in 0..d {
                    let pair = build_test_pair(tau, kt, lt, d).map_err(|e| e.to_string())?;
                    let g = interaction_matrix(&pair.phi, &pair.psi).map_err(|e| e.to_string())?;
                    let dev = (&g - poslab::tents::contract_matrix(tau, kt, lt, d)).amax();
                    worst = worst.max(dev);
                    check(dev <= 1e-12, || format!("d={d} tau={tau} ({kt},{lt}): deviation {dev:e}"))?;
                    for x in &pts {
                        let (p, q) = (pair.phi.eval(x), pair.psi.eval(x));
                        check(p >= 0.0 && q >= 0.0, || format!("negative tent value at {x:?}: {p}, {q}"))?;
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} pairs, max deviation {worst:e}"))
}

fn null_form() -> Outcome {
    let e = catalog::get("ex3_5_nullform").map_err(|e| e.to_string())?;
    let mut norms = Vec::new();
    for n in [4, 8, 16] {
        let grid = Grid::for_system(&e.system, n).map_err(|e| e.to_string())?;
        let k = assemble(&e.system, &grid).map_err(|e| e.to_string())?.max_abs();
        check(k <= 1e-10, || format!("grid {n}: max |K| = {k:e}"))?;
        norms.push(k);
    }
    let points = default_probe_points(&e.system);
    check(points.len() == 27, || format!("{} probe points", points.len()))?;
    let mut worst: f64 = 0.0;
    for x in &points {
        for k in 0..3 {
            for l in k..3 {
                let r = probe(&e.system, x, k, l, &ProbeOptions::default()).map_err(|e| e.to_string())?;
                let v = r.estimate.iter().map(|z| z.norm()).fold(0.0, f64::max);
                worst = worst.max(v);
                check(v <= 1e-8, || format!("probe at {x:?} ({k},{l}) = {v:e}"))?;
            }
        }
    }
    Ok(format!("max |K| {:e}/{:e}/{:e}, max probe {worst:e}", norms[0], norms[1], norms[2]))
}

fn decision_suite() -> Vec<(String, Expected)> {
    let mut v: Vec<(String, Expected)> = ["scalar_heat", "ex1_3", "ex1_3_entry1", "ex5_5", "witness_W"]
        .iter()
        .map(|n| (n.to_string(), catalog::get(n).unwrap().expected))
        .collect();
    for seed in 0..20 {
        v.push((format!("rand_decoupled({seed})"), Expected::PositiveDecoupled));
        v.push((format!("rand_coupled({seed})"), Expected::NotPositive));
    }
    v
}

fn decisions() -> Outcome {
    let mut wrong = Vec::new();
    let mut n = 0;
    for (name, expected) in decision_suite() {
        let sys = catalog::get(&name).map_err(|e| e.to_string())?.system;
        let want = match expected {
            Expected::PositiveDecoupled => Decision::PositiveDecoupled,
            Expected::NotPositive => Decision::NotPositive,
            Expected::NullForm => continue,
        };
        let v = decide_decoupling(&sys, &DecisionOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        if v.decision != want {
            wrong.push(name);
        }
        n += 1;
    }
    check(wrong.is_empty(), || format!("misclassified: {wrong:?}"))?;
    Ok(format!("{n} systems, 0 misclassified"))
}

fn witnesses() -> Outcome {
    let mut count = 0;
    let mut min_ratio = f64::INFINITY;
    for (name, expected) in decision_suite() {
        if expected != Expected::NotPositive {
            continue;
        }
        let sys = catalog::get(&name).map_err(|e| e.to_string())?.system;
        let v = decide_decoupling(&sys, &DecisionOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let Some(Witness::Lattice(w)) = &v.witness else {
            return Err(format!("{name}: no lattice witness"));
        };
        let again = w.reevaluate(&sys).map_err(|e| e.to_string())?;
        let margin = 0.5 * w.delta.powi(sys.d() as i32 - 2) * w.tau * w.tau;
        check(again > 0.0 && again >= margin, || format!("{name}: a(u+,u-) = {again}, margin {margin}"))?;
        min_ratio = min_ratio.min(again / margin);
        if name == "witness_W" {
            check((again - 4.0).abs() <= 1e-10, || format!("witness_W value {again}"))?;
        }
        count += 1;
    }
    Ok(format!("{count} witnesses, min value/margin {min_ratio:.3}, witness_W = 4"))
}

fn factorization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut systems = 0;
    for (name, expected) in decision_suite() {
        if expected != Expected::PositiveDecoupled {
            continue;
        }
        let e = catalog::get(&name).map_err(|e| e.to_string())?;
        let v = decide_decoupling(&e.system, &DecisionOptions::default()).map_err(|e| e.to_string())?;
        let scalars = v.scalar_systems.ok_or_else(|| format!("{name}: no scalar systems"))?;
        let grid = Grid::for_system(&e.system, e.default_grid).map_err(|e| e.to_string())?;
        let block = assemble(&e.system, &grid).map_err(|e| e.to_string())?;
        let channels = scalars
            .iter()
            .map(|s| assemble(s, &grid))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let f = Factorization::new(&block, &channels).map_err(|e| format!("{name}: {e}"))?;
        let states: Vec<Vec<C64>> = (0..10)
            .map(|_| (0..block.size()).map(|_| c(rng.random_range(-1.0..1.0))).collect())
            .collect();
        let times = [0.01, 0.1, 1.0];
        for t in times {
            for r in f.residuals(t, &states).map_err(|e| e.to_string())? {
                worst = worst.max(r);
                check(r <= 1e-10, || format!("{name}: residual {r:e} at t = {t}"))?;
            }
        }
        for (n, ch) in f.channels.iter().enumerate() {
            let rep = positivity_scan(ch, &times, 1e-9).map_err(|e| e.to_string())?;
            check(rep.verdict != ScanVerdict::NegativeFound, || {
                format!("{name} channel {n}: min entry {:e}", rep.min_entry)
            })?;
        }
        systems += 1;
    }
    Ok(format!("{systems} systems, max residual {worst:e}"))
}

fn random_cmat(rng: &mut ChaCha8Rng, m: usize, pattern: Option<u32>) -> CMat {
    CMat::from_fn(m, m, |i, j| {
        let on = pattern.is_none_or(|p| p >> (i * m + j) & 1 == 1);
        if on {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        } else {
            C64::default()
        }
    })
}

fn is_diagonal(q: &CMat) -> bool {
    (0..q.nrows()).all(|i| (0..q.ncols()).all(|j| i == j || q[(i, j)] == C64::default()))
}

fn multiplication() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tol = 1e-12;
    for n in 0..10_000 {
        let m = 1 + n % 4;
        let mut q = random_cmat(&mut rng, m, None);
        if n % 3 == 0 {
            q = CMat::from_diagonal(&q.diagonal());
        }
        let (a, b, c2) = (
            is_multiplication(&q, tol),
            commutes_with_indicators(&q, tol),
            dominated_on_basis(&q, tol),
        );
        let w = find_witness(&q, tol);
        check(a == b && b == c2 && a == w.is_none(), || format!("predicates disagree on {q}"))?;
        if let Some(w) = w {
            check(w.is_valid(), || format!("invalid witness for {q}"))?;
        }
    }
    let mut patterns = 0;
    for m in 1..=3 {
        for p in 0u32..(1 << (m * m)) {
            let q = random_cmat(&mut rng, m, Some(p));
            let diag = is_diagonal(&q);
            let verdicts = [
                is_multiplication(&q, tol),
                commutes_with_indicators(&q, tol),
                dominated_on_basis(&q, tol),
                find_witness(&q, tol).is_none(),
            ];
            check(verdicts.iter().all(|&v| v == diag), || format!("pattern {p:b} for m = {m}: {verdicts:?}"))?;
            patterns += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for n in 0..1000 {
        let m = 1 + n % 8;
        let s = random_cmat(&mut rng, m, None);
        let t = random_cmat(&mut rng, m, None);
        let r = trace_duality_residual(&s, &t);
        worst = worst.max(r / trace_duality_bound(&s, &t).max(f64::MIN_POSITIVE) * 1e-12);
        check(r <= trace_duality_bound(&s, &t).max(1e-12), || format!("trace duality residual {r:e}"))?;
    }
    Ok(format!("10000 random, {patterns} patterns, trace duality worst scaled residual {worst:e}"))
}

fn random_dirichlet_system(rng: &mut ChaCha8Rng) -> EllipticSystem {
    let m = rng.random_range(1..=3);
    let mut coeffs = Vec::new();
    for kl in 0..4 {
        let mut a = CMat::from_fn(m, m, |_, _| C64::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)));
        if kl == 0 || kl == 3 {
            a += CMat::identity(m, m) * c(6.0);
        }
        let x = Polynomial::coordinate(2, rng.random_range(0..2));
        let mut pm = PolyMatrix::from_constant(&a, 2);
        pm.set(0, 0, pm.get(0, 0) + &(&x * c(rng.random_range(-0.3..0.3))));
        coeffs.push(MatrixField::Polynomial(pm));
    }
    EllipticSystem::new(BoxDomain::cube(2, 0.0, 1.0), coeffs, Bc::Dirichlet, 1.0).unwrap()
}

fn gauge() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut systems: Vec<EllipticSystem> = (0..7).map(|_| random_dirichlet_system(&mut rng)).collect();
    for name in ["ex1_3", "witness_W", "rand_coupled(2)"] {
        systems.push(catalog::get(name).unwrap().system);
    }
    for sys in &systems {
        let grid = Grid::for_system(sys, 6).map_err(|e| e.to_string())?;
        let k0 = assemble(sys, &grid).map_err(|e| e.to_string())?;
        let base = decide_decoupling(sys, &DecisionOptions::default()).map_err(|e| e.to_string())?;
        for g in [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(2.0, 3.0)] {
            for sign in [1.0, -1.0] {
                let shifted = sys.gauge(0, 1, g * sign).map_err(|e| e.to_string())?;
                let k1 = assemble(&shifted, &grid).map_err(|e| e.to_string())?;
                let diff = k0
                    .stiffness
                    .to_dense()
                    .iter()
                    .zip(k1.stiffness.to_dense().iter())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
                    / k0.max_abs();
                worst = worst.max(diff);
                check(diff <= 1e-10, || format!("relative assembly change {diff:e}"))?;
                let v = decide_decoupling(&shifted, &DecisionOptions::default()).map_err(|e| e.to_string())?;
                check(v.decision == base.decision, || format!("verdict changed under gauge {g}"))?;
            }
        }
    }
    Ok(format!("{} systems, max relative change {worst:e}", systems.len()))
}

fn checked_ellipticity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let m = rng.random_range(1..=3);
        let coeffs: Vec<MatrixField> = (0..d * d)
            .map(|kl| {
                let mut a = CMat::from_fn(m, m, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                if kl / d == kl % d {
                    a += CMat::identity(m, m) * c(2.0 * d as f64 * m as f64);
                }
                MatrixField::Constant(a)
            })
            .collect();
        let sys = EllipticSystem::new(BoxDomain::cube(d, 0.0, 1.0), coeffs, Bc::Dirichlet, 0.0).unwrap();
        let x = sys.domain.center();
        let before = sys.hermitian_lambda_min(&x).map_err(|e| e.to_string())?;
        let after = sys.checked().hermitian_lambda_min(&x).map_err(|e| e.to_string())?;
        check(before > 0.0, || format!("sampled system not elliptic: {before}"))?;
        check(after >= before - 1e-10, || format!("checked lambda_min {after} < {before}"))?;
        worst = worst.min(after - before);
    }
    Ok(format!("100 systems, min(lambda_checked - lambda) = {worst:e}"))
}

fn probe_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut min_order = f64::INFINITY;
    let mut worst: f64 = 0.0;
    for n in 0..10 {
        let mut terms = Vec::new();
        for e in [[1, 0], [0, 1], [2, 0], [1, 1], [0, 2]] {
            terms.push((e.to_vec(), c(rng.random_range(-0.5..0.5))));
        }
        let p = Polynomial::from_terms(2, 2, terms).unwrap();
        let (k, l) = [(0, 0), (0, 1), (1, 1)][n % 3];
        let field = MatrixField::Polynomial(PolyMatrix::new(1, vec![p]).unwrap());
        let mut coeffs = vec![MatrixField::zero(1); 4];
        coeffs[k * 2 + l] = field;
        let sys = EllipticSystem::new(BoxDomain::cube(2, 0.0, 1.0), coeffs, Bc::Dirichlet, 0.0).unwrap();
        let x0 = [rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)];
        let r = probe(&sys, &x0, k, l, &ProbeOptions::default()).map_err(|e| e.to_string())?;
        let exact = sys.symmetrized(k, l, &x0).map_err(|e| e.to_string())?;
        check(
            (r.deltas[0] / r.deltas.last().unwrap() - 64.0).abs() < 1e-9,
            || "schedule does not span a factor 64".into(),
        )?;
        let errors = r.errors(&exact);
        let order = observed_order(&r.deltas, &errors).ok_or("no nonzero errors")?;
        let err = (&r.estimate - &exact).iter().map(|z| z.norm()).fold(0.0, f64::max);
        min_order = min_order.min(order);
        worst = worst.max(err);
        check(order >= 0.9, || format!("field {n}: observed order {order:.3}"))?;
        check(err <= 1e-6, || format!("field {n}: extrapolated error {err:e}"))?;
    }
    Ok(format!("min observed order {min_order:.3}, max extrapolated error {worst:e}"))
}

fn random_generator(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) / n as f64);
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    a
}

fn semigroup_engine() -> Outcome {
    let z = DMatrix::<f64>::zeros(4, 4);
    let e = expm(&z).map_err(|e| e.to_string())?;
    check((e - DMatrix::identity(4, 4)).amax() <= 1e-12, || "exp(0) != I".into())?;
    let diag: [f64; 4] = [-2.0, 0.3, 1.5, -7.0];
    let e = expm(&DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&diag))).map_err(|e| e.to_string())?;
    for (i, v) in diag.iter().enumerate() {
        check((e[(i, i)] - v.exp()).abs() <= 1e-12 * v.exp().max(1.0), || format!("diagonal entry {i}"))?;
    }
    let nil = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
    let exact = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 4.0, 0.0, 1.0, 3.0, 0.0, 0.0, 1.0]);
    check((expm(&nil).map_err(|e| e.to_string())? - exact).amax() <= 1e-12, || "nilpotent".into())?;
    let (a, b): (f64, f64) = (-0.7, 1.3);
    let m2 = DMatrix::from_row_slice(2, 2, &[a, b, b, a]);
    let closed = DMatrix::from_row_slice(2, 2, &[b.cosh(), b.sinh(), b.sinh(), b.cosh()]) * a.exp();
    check((expm(&m2).map_err(|e| e.to_string())? - closed).amax() <= 1e-12, || "2x2 closed form".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = 2 + (i * 37) % 127;
        let gen = Generator::from_real(&random_generator(&mut rng, n));
        let (s, t) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let lhs = gen.exp_dense(s + t).map_err(|e| e.to_string())?;
        let rhs = gen.exp_dense(s).map_err(|e| e.to_string())? * gen.exp_dense(t).map_err(|e| e.to_string())?;
        let r = (&lhs - &rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) / lhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(r);
        check(r <= 1e-9, || format!("semigroup law residual {r:e} at n = {n}"))?;
    }
    Ok(format!("expm oracles ok, semigroup law worst {worst:e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("tent pair interaction matrices", tents),
        ("null form assembles and probes to zero", null_form),
        ("decision suite", decisions),
        ("witness soundness", witnesses),
        ("factorization into scalar semigroups", factorization),
        ("multiplication operator predicates", multiplication),
        ("gauge invariance", gauge),
        ("ellipticity preserved by the real part", checked_ellipticity),
        ("probe convergence", probe_convergence),
        ("semigroup engine", semigroup_engine),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
