//! Acceptance battery: one pass/fail line per criterion. Pass criterion
//! numbers as arguments to run a subset.

use std::time::Instant;

use calderon_core::conductivity::{Bump, ConductivityField};
use calderon_core::fem::{h1_norm, solve_one_harmonic};
use calderon_core::fit::fit_loglog;
use calderon_core::harness::{validate_suite, SuiteOptions};
use calderon_core::geometry::{
    find_corkscrew_point, generate_prefractal, verify_n_set, PlanarDomain, Point, PrefractalSpec,
};
use calderon_core::inverse::{
    boundary_recovery, direct_stability_experiment, domain_stability_experiment, ConductivityPair, RecoverySchedule,
};
use calderon_core::mesh::{rectangle_mesh, triangulate};
use calderon_core::schrodinger::{
    cgo_decay_experiment, compute_q, conjugation_check, schrodinger_equivalence_residual, PotentialSource,
};
use calderon_core::trace::{
    alessandrini_identity_with, assemble_dtn, assemble_trace_gram, dual_norm, modulated_trace_norm_check,
    weak_normal_derivative, DtnOperator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), calderon_core::Error>;

fn snowflake2() -> PlanarDomain {
    generate_prefractal(&PrefractalSpec::snowflake(2)).unwrap()
}

fn snowflake_centre() -> Point {
    Point::new(0.5, 3f64.sqrt() / 6.0)
}

fn random_conductivity(rng: &mut ChaCha8Rng, domain: &PlanarDomain) -> ConductivityField {
    let base = rng.random_range(0.5..2.0);
    let (lo, hi) = domain.bounding_box();
    let n = rng.random_range(1..=3);
    let mut bumps = Vec::new();
    while bumps.len() < n {
        let c = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if !domain.contains(c) {
            continue;
        }
        let amp = rng.random_range(-0.3 * base..base);
        bumps.push(Bump::new(c, rng.random_range(0.1..0.4), amp));
    }
    ConductivityField::bumps(base, bumps).unwrap()
}

fn random_trace(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn frobenius(m: &faer::Mat<f64>) -> f64 {
    m.norm_l2()
}

/// Alessandrini identity on 50 random draws (also returns the operators for
/// the structural checks).
fn criterion_1(store: &mut Vec<DtnOperator>) -> Outcome {
    let domain = snowflake2();
    let mesh = triangulate(&domain, 0.03)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let g1 = random_conductivity(&mut rng, &domain);
        let g2 = random_conductivity(&mut rng, &domain);
        let f1 = random_trace(&mut rng, mesh.n_boundary());
        let f2 = random_trace(&mut rng, mesh.n_boundary());
        let l1 = assemble_dtn(&mesh, &g1)?;
        let l2 = assemble_dtn(&mesh, &g2)?;
        let (lhs, rhs) = alessandrini_identity_with(&mesh, &g1, &g2, &l1, &l2, &f1, &f2)?;
        worst = worst.max((lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1.0));
        store.push(l1);
        store.push(l2);
    }
    Ok((worst <= 1e-9, format!("worst normalized defect {worst:.3e} (limit 1e-9), n_boundary {}", mesh.n_boundary())))
}

fn criterion_2(store: &[DtnOperator]) -> Outcome {
    let (mut sym, mut kernel, mut neg): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for l in store {
        let m = &l.matrix;
        let n = m.nrows();
        let scale = frobenius(m);
        sym = sym.max(frobenius(&(m - m.transpose())) / scale);
        let ones = vec![1.0; n];
        let r = l.apply(&ones);
        kernel = kernel.max(r.iter().map(|v| v * v).sum::<f64>().sqrt() / scale);
        // PSD on the complement of constants: project out 1 and take the
        // smallest eigenvalue of the projected matrix.
        let row: Vec<f64> = (0..n).map(|i| (0..n).map(|k| m[(i, k)]).sum::<f64>() / n as f64).collect();
        let col: Vec<f64> = (0..n).map(|j| (0..n).map(|k| m[(k, j)]).sum::<f64>() / n as f64).collect();
        let all = row.iter().sum::<f64>() / n as f64;
        let p = faer::Mat::from_fn(n, n, |i, j| m[(i, j)] - row[i] - col[j] + all);
        let eig = p.self_adjoint_eigenvalues(faer::Side::Lower).map_err(|e| calderon_core::Error::Solver(format!("{e:?}")))?;
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        neg = neg.max(-min / scale);
    }
    let pass = sym <= 1e-10 && kernel <= 1e-10 && neg <= 1e-10;
    Ok((
        pass,
        format!(
            "{} operators: symmetry {sym:.2e}, ‖Λ1‖/‖Λ‖ {kernel:.2e}, negative part {neg:.2e} (limits 1e-10)",
            store.len()
        ),
    ))
}

fn criterion_3() -> Outcome {
    let domain = snowflake2();
    let mesh = triangulate(&domain, 0.03)?;
    let gram = assemble_trace_gram(&mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut partial: f64 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let u = random_trace(&mut rng, mesh.n_vertices());
        let tr = gram.norm(&mesh.trace_of(&u));
        partial = partial.max((tr - h1_norm(&mesh, &u)) / h1_norm(&mesh, &u));
    }
    let one = ConductivityField::constant(1.0)?;
    let (mut equality, mut isometry): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let f = random_trace(&mut rng, mesh.n_boundary());
        let v = solve_one_harmonic(&mesh, &f)?;
        let hv = h1_norm(&mesh, &v);
        equality = equality.max((gram.norm(&f) - hv).abs() / hv);
        // −Δv + v = 0, so the source ∇·∇v is v itself.
        let g = weak_normal_derivative(&mesh, &v, &one, Some(&v))?;
        isometry = isometry.max((dual_norm(&g, &gram) - hv).abs() / hv);
    }
    let pass = partial <= 1e-9 && equality <= 1e-9 && isometry <= 1e-9;
    Ok((
        pass,
        format!("max (‖Tr u‖−‖u‖)/‖u‖ {partial:.2e}; extension equality {equality:.2e}; normal-derivative isometry {isometry:.2e}"),
    ))
}

fn criterion_4() -> Outcome {
    let domain = snowflake2();
    let mesh = triangulate(&domain, 0.03)?;
    let gram = assemble_trace_gram(&mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(0.1..3.0));
        let (k1, k2, c) = (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(0.0..6.3));
        let phi = (
            move |p: Point| a + b * (k1 * p.x + k2 * p.y + c).sin(),
            move |p: Point| {
                let s = b * (k1 * p.x + k2 * p.y + c).cos();
                Point::new(k1 * s, k2 * s)
            },
        );
        let f = random_trace(&mut rng, mesh.n_boundary());
        let (lhs, rhs) = modulated_trace_norm_check(&mesh, &gram, &phi, &f);
        worst = worst.max(lhs / rhs);
        if lhs > rhs {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} violations in 100 draws, max lhs/rhs {worst:.3}")))
}

fn criterion_5() -> Outcome {
    let domain = snowflake2();
    let mesh = triangulate(&domain, 0.03)?;
    let gram = assemble_trace_gram(&mesh)?;
    let pairs: Vec<ConductivityPair> = [0.025, 0.05, 0.1, 0.2]
        .iter()
        .map(|&t| ConductivityPair {
            label: t,
            gamma1: ConductivityField::collar(1.0, vec![Bump::new(snowflake_centre(), 0.2, t)], &domain).unwrap(),
            gamma2: ConductivityField::constant(1.0).unwrap(),
        })
        .collect();
    let r = direct_stability_experiment(&mesh, &gram, &pairs)?;
    let t: Vec<f64> = r.column("label").unwrap();
    let d = r.column("dtn_diff").unwrap();
    let slope = fit_loglog(&t, &d)?.slope;
    let max_ratio = r.scalar("max_ratio").unwrap();
    let pass = (slope - 1.0).abs() <= 0.1 && max_ratio <= 1.0;
    Ok((pass, format!("slope {slope:.4} (1.0±0.1), max measured/formula constant {max_ratio:.4e} (≤ 1)")))
}

fn criterion_6() -> Outcome {
    let h = 0.01;
    let domain = generate_prefractal(&PrefractalSpec::unit_square())?;
    let mesh = triangulate(&domain, h)?;
    let one = ConductivityField::constant(1.0)?;
    let high = ConductivityField::constant(1.1)?;
    let bump = ConductivityField::bumps(1.0, vec![Bump::new(Point::new(0.5, 0.0), 0.3, 0.1)])?;
    let (l1, (l11, lb)) = rayon::join(
        || assemble_dtn(&mesh, &one),
        || rayon::join(|| assemble_dtn(&mesh, &high), || assemble_dtn(&mesh, &bump)),
    );
    let (l1, l11, lb) = (l1?, l11?, lb?);
    let near = RecoverySchedule::for_resolution(&domain, Point::new(0.5, 0.0), h)?;
    let far = RecoverySchedule::for_resolution(&domain, Point::new(0.5, 1.0), h)?;
    let est = boundary_recovery(&mesh, &domain, &l11, &l1, &high, &one, &near)?.estimate;
    let loc = boundary_recovery(&mesh, &domain, &lb, &l1, &bump, &one, &far)?.estimate;
    let pass = (est - 0.1).abs() <= 0.2 * 0.1 && loc.abs() <= 0.01;
    Ok((
        pass,
        format!(
            "constant pair estimate {est:.6} (0.1 ± 20%), far-point estimate {loc:.3e} (≤ 0.01), σ from {:.3} to {:.3}, n_vertices {}",
            near.sigma[0],
            near.sigma.last().unwrap(),
            mesh.n_vertices()
        ),
    ))
}

fn criterion_7() -> Outcome {
    let domain = generate_prefractal(&PrefractalSpec::snowflake(1))?;
    let gamma = ConductivityField::collar(1.0, vec![Bump::new(snowflake_centre(), 0.2, 1.0)], &domain)?;
    let mut hs = Vec::new();
    let mut residuals = Vec::new();
    let mut conj = Vec::new();
    for h in [0.08, 0.04, 0.02] {
        let mesh = triangulate(&domain, h)?;
        let q = compute_q(&mesh, &gamma, PotentialSource::Analytic)?;
        let f = mesh.boundary_trace(|p| p.x + 0.5 * p.y);
        hs.push(mesh.h_max());
        residuals.push(schrodinger_equivalence_residual(&mesh, &gamma, &q, &f)?);
        conj.push(conjugation_check(&mesh, &gamma)?);
    }
    let rs = fit_loglog(&hs, &residuals)?.slope;
    let cs = fit_loglog(&hs, &conj)?.slope;

    let mesh = triangulate(&domain, 0.08)?;
    let c = ConductivityField::constant(3.0)?;
    let q = compute_q(&mesh, &c, PotentialSource::Analytic)?;
    let f = mesh.boundary_trace(|p| p.x * p.y);
    let exact_res = schrodinger_equivalence_residual(&mesh, &c, &q, &f)? / h1_norm(&mesh, &mesh.interpolate(|p| p.x * p.y));
    let exact_conj = conjugation_check(&mesh, &c)?;
    let pass = rs >= 0.8 && cs >= 0.8 && exact_res <= 1e-10 && exact_conj <= 1e-10 && conj[2] <= 0.05;
    Ok((
        pass,
        format!(
            "residuals {} slope {rs:.3}; conjugation {} slope {cs:.3} (≥ 0.8); constant γ: {exact_res:.1e}, {exact_conj:.1e}",
            sci(&residuals),
            sci(&conj)
        ),
    ))
}

/// Collar bump of the given amplitude on the unit square with its potential.
fn cgo_potential(amplitude: f64) -> (PlanarDomain, calderon_core::schrodinger::PotentialField) {
    let sq = generate_prefractal(&PrefractalSpec::unit_square()).unwrap();
    let mesh = rectangle_mesh(Point::new(0.0, 0.0), Point::new(1.0, 1.0), 100, 100).unwrap();
    let g = ConductivityField::collar(1.0, vec![Bump::new(Point::new(0.5, 0.5), 0.3, amplitude)], &sq).unwrap();
    let q = compute_q(&mesh, &g, PotentialSource::Analytic).unwrap();
    (sq, q)
}

fn criterion_8() -> Outcome {
    // Fixed-point rescaling of the amplitude towards ‖q‖∞ = 5.
    let mut amp = 0.05;
    for _ in 0..4 {
        amp *= 5.0 / cgo_potential(amp).1.sup_bound;
    }
    let (sq, q) = cgo_potential(amp);
    let taus = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0];
    let r = cgo_decay_experiment(&sq, &q, &taus, 0.0125, 0.0)?;
    let tau = r.column("tau").unwrap();
    let norm = r.column("norm_R").unwrap();
    let big: Vec<usize> = (0..tau.len()).filter(|&i| tau[i] >= 5.0).collect();
    let slope = fit_loglog(&big.iter().map(|&i| tau[i]).collect::<Vec<_>>(), &big.iter().map(|&i| norm[i]).collect::<Vec<_>>())?.slope;
    let plateau = r.scalar("plateau_constant").unwrap();
    let pass = (-1.3..=-0.7).contains(&slope) && plateau <= 10.0;
    Ok((
        pass,
        format!(
            "‖q‖∞ {:.3}, ‖R‖ {}, slope over τ∈{{5,10,20,40}} {slope:.3} ([−1.3,−0.7]), plateau constant {plateau:.3} (≤ 10)",
            q.sup_bound,
            sci(&norm)
        ),
    ))
}

fn criterion_9() -> Outcome {
    let domain = snowflake2();
    let mesh = triangulate(&domain, 0.03)?;
    let gram = assemble_trace_gram(&mesh)?;
    let pairs: Vec<ConductivityPair> = [0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&t| ConductivityPair {
            label: t,
            gamma1: ConductivityField::collar(1.0, vec![Bump::new(snowflake_centre(), 0.2, t)], &domain).unwrap(),
            gamma2: ConductivityField::constant(1.0).unwrap(),
        })
        .collect();
    let r = domain_stability_experiment(&mesh, &gram, &pairs)?;
    let delta = r.scalar("delta").unwrap_or(f64::NAN);
    let r2 = r.scalar("r_squared").unwrap_or(f64::NAN);
    let pass = r.rows.len() == 4 && delta > 0.0 && r2 >= 0.9;
    Ok((pass, format!("δ {delta:.4} (> 0), R² {r2:.4} (≥ 0.9)")))
}

fn criterion_10() -> Outcome {
    let domain = snowflake2();
    let nset = verify_n_set(&domain, 2000, &[1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 0.01], 10)?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut min_delta = f64::INFINITY;
    for _ in 0..20 {
        let x0 = domain.point_at_arclength(rng.random_range(0.0..domain.boundary_arclength));
        for r in [0.1, 0.05] {
            let c = find_corkscrew_point(&domain, x0, r)?;
            if !c.verify(&domain) {
                return Ok((false, format!("certificate at {x0:?}, r = {r} does not verify")));
            }
            min_delta = min_delta.min(c.delta);
        }
    }
    let pass = nset.min_ratio >= 0.1 && min_delta >= 0.1;
    Ok((pass, format!("c_Ω {:.4} (≥ 0.1), min corkscrew δ {min_delta:.4} (≥ 0.1)", nset.min_ratio)))
}

fn criterion_11() -> Outcome {
    let start = Instant::now();
    let summary = validate_suite(SuiteOptions::default());
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = summary.failures().iter().map(|c| c.name).collect();
    let pass = summary.all_passed() && secs <= 300.0;
    Ok((
        pass,
        format!("{} checks in {secs:.1} s (≤ 300 s), failed: {failed:?}", summary.checks.len()),
    ))
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut store = Vec::new();
    let mut failures = 0;
    let mut report = |n: u32, name: &str, run: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match outcome {
            Ok((true, d)) => ("PASS", d),
            Ok((false, d)) => ("FAIL", d),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!("criterion {n:>2} [{name}]: {status} — {detail} ({secs:.1} s)");
    };
    report(1, "Alessandrini identity", &mut || criterion_1(&mut store));
    report(2, "DtN structure", &mut || {
        if store.is_empty() {
            criterion_1(&mut store)?;
        }
        criterion_2(&store)
    });
    report(3, "trace isometries", &mut criterion_3);
    report(4, "modulation bounds", &mut criterion_4);
    report(5, "direct stability", &mut criterion_5);
    report(6, "boundary recovery", &mut criterion_6);
    report(7, "Schrödinger equivalence", &mut criterion_7);
    report(8, "CGO decay", &mut criterion_8);
    report(9, "domain-stability modulus", &mut criterion_9);
    report(10, "geometry hypotheses", &mut criterion_10);
    report(11, "validation suite", &mut criterion_11);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
