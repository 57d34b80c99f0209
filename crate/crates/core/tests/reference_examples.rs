//! Worked examples with independently computable answers: closed-form
//! fluxes, sampling bounds, refinement studies and cross-level comparisons.

use calderon_core::conductivity::{Bump, ConductivityField};
use calderon_core::expr::Expression;
use calderon_core::fem::{h10_seminorm, h1_norm, l2_norm, solve_dirichlet};
use calderon_core::fit::fit_loglog;
use calderon_core::geometry::{generate_prefractal, PlanarDomain, Point, PrefractalSpec};
use calderon_core::inverse::{
    boundary_recovery, boundary_stability_curve, schrodinger_dtn_gap, ConductivityPair, RecoverySchedule,
};
use calderon_core::mesh::triangulate;
use calderon_core::schrodinger::{cgo_decay_experiment, compute_q, PotentialSource};
use calderon_core::trace::{assemble_dtn, assemble_trace_gram, dual_norm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square() -> PlanarDomain {
    generate_prefractal(&PrefractalSpec::unit_square()).unwrap()
}

fn unit() -> ConductivityField {
    ConductivityField::constant(1.0).unwrap()
}

#[test]
fn harmonic_quadratic_converges_at_second_order() {
    let domain = square();
    let exact = |p: Point| p.x * p.x - p.y * p.y;
    let hs = [0.2, 0.1, 0.05, 0.025];
    let mut errors = Vec::new();
    for &h in &hs {
        let mesh = triangulate(&domain, h).unwrap();
        let u = solve_dirichlet(&mesh, &unit(), &mesh.boundary_trace(exact)).unwrap();
        let e: Vec<f64> = u.iter().zip(mesh.interpolate(exact)).map(|(a, b)| a - b).collect();
        errors.push(l2_norm(&mesh, &e));
    }
    let fit = fit_loglog(&hs, &errors).unwrap();
    assert!(fit.slope >= 1.8, "slope {} errors {errors:?}", fit.slope);
}

#[test]
fn poincare_chain_holds_for_zero_trace_functions() {
    let domain = square();
    let mesh = triangulate(&domain, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Friedrichs on a strip of unit width: ‖u‖_{L²} ≤ ‖∇u‖/π.
    let bound = (1.0 + 1.0 / std::f64::consts::PI.powi(2)).sqrt();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut u: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for &b in &mesh.boundary_indices {
            u[b] = 0.0;
        }
        let semi = h10_seminorm(&mesh, &u);
        let full = h1_norm(&mesh, &u);
        assert!(semi <= full * (1.0 + 1e-12));
        worst = worst.max(full / semi);
    }
    assert!(worst <= bound * 1.05, "measured Poincaré constant {worst}");
}

#[test]
fn flux_of_linear_function_on_square_is_exact() {
    let domain = square();
    let mesh = triangulate(&domain, 0.1).unwrap();
    let dtn = assemble_dtn(&mesh, &unit()).unwrap();
    let flux = dtn.apply(&mesh.boundary_trace(|p| p.x));
    let (mut right, mut left, mut horizontal) = (0.0, 0.0, 0.0f64);
    for (i, &v) in mesh.boundary_indices.iter().enumerate() {
        let p = mesh.vertices[v];
        if (p.x - 1.0).abs() < 1e-12 {
            right += flux[i];
        } else if p.x.abs() < 1e-12 {
            left += flux[i];
        } else {
            horizontal = horizontal.max(flux[i].abs());
        }
    }
    assert!((right - 1.0).abs() < 1e-10, "right flux {right}");
    assert!((left + 1.0).abs() < 1e-10, "left flux {left}");
    assert!(horizontal < 1e-10, "horizontal flux {horizontal}");
    assert!(flux.iter().sum::<f64>().abs() < 1e-10);
}

#[test]
fn dual_norm_is_the_supremum_over_sampled_traces() {
    let domain = generate_prefractal(&PrefractalSpec::snowflake(1)).unwrap();
    let mesh = triangulate(&domain, 0.08).unwrap();
    let gram = assemble_trace_gram(&mesh).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g: Vec<f64> = (0..gram.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = dual_norm(&g, &gram);
    let pairing = |f: &[f64]| g.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() / gram.norm(f);
    for _ in 0..1000 {
        let f: Vec<f64> = (0..gram.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(pairing(&f) <= norm * (1.0 + 1e-12));
    }
    let optimal = gram.solve(&g);
    assert!((pairing(&optimal) - norm).abs() <= 1e-10 * norm);
}

#[test]
fn cgo_remainder_decreases_with_frequency_for_bump_potential() {
    let domain = square();
    let mesh = triangulate(&domain, 0.05).unwrap();
    let gamma = ConductivityField::collar(1.0, vec![Bump::new(Point::new(0.5, 0.5), 0.3, 0.5)], &domain).unwrap();
    let q = compute_q(&mesh, &gamma, PotentialSource::Analytic).unwrap();
    let report = cgo_decay_experiment(&domain, &q, &[5.0, 10.0, 20.0, 40.0], 0.0125, 0.3).unwrap();
    let norms = report.column("norm_R").unwrap();
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
}

#[test]
fn boundary_bump_is_recovered_and_localized() {
    let domain = square();
    let mesh = triangulate(&domain, 0.01).unwrap();
    let x0 = Point::new(0.5, 0.0);
    let gamma1 = ConductivityField::bumps(1.0, vec![Bump::new(x0, 0.3, 0.2)]).unwrap();
    let gamma2 = unit();
    let l1 = assemble_dtn(&mesh, &gamma1).unwrap();
    let l2 = assemble_dtn(&mesh, &gamma2).unwrap();
    let recover = |x: Point| {
        let schedule = RecoverySchedule::for_resolution(&domain, x, mesh.h_max()).unwrap();
        boundary_recovery(&mesh, &domain, &l1, &l2, &gamma1, &gamma2, &schedule).unwrap().estimate
    };
    let at_bump = recover(x0);
    assert!((at_bump - 0.2).abs() <= 0.3 * 0.2, "estimate at the bump {at_bump}");
    let far = recover(Point::new(0.5, 1.0));
    assert!(far.abs() <= 0.02, "estimate far from the bump {far}");
}

fn linear_pairs(domain: &PlanarDomain, slopes: &[f64]) -> Vec<ConductivityPair> {
    slopes
        .iter()
        .map(|&t| ConductivityPair {
            label: t,
            gamma1: ConductivityField::expression(Expression::parse(&format!("1 + {t}*x")).unwrap(), domain).unwrap(),
            gamma2: ConductivityField::constant(1.0).unwrap(),
        })
        .collect()
}

#[test]
fn boundary_stability_ratio_is_constant_for_constant_pairs() {
    let domain = square();
    let mesh = triangulate(&domain, 0.1).unwrap();
    let gram = assemble_trace_gram(&mesh).unwrap();
    let pairs: Vec<ConductivityPair> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&t| ConductivityPair {
            label: t,
            gamma1: ConductivityField::constant(1.0 + t).unwrap(),
            gamma2: ConductivityField::constant(1.0).unwrap(),
        })
        .collect();
    let report = boundary_stability_curve(&mesh, &gram, &pairs).unwrap();
    let ratios = report.column("ratio").unwrap();
    assert!(ratios.iter().all(|r| (r - ratios[0]).abs() <= 1e-8 * ratios[0]), "{ratios:?}");
}

#[test]
fn boundary_stability_ratio_is_uniform_across_snowflake_levels() {
    let mut all = Vec::new();
    for level in 1..=3 {
        let domain = generate_prefractal(&PrefractalSpec::snowflake(level)).unwrap();
        let mesh = triangulate(&domain, 0.03).unwrap();
        let gram = assemble_trace_gram(&mesh).unwrap();
        let report = boundary_stability_curve(&mesh, &gram, &linear_pairs(&domain, &[0.05, 0.1, 0.2])).unwrap();
        all.extend(report.column("ratio").unwrap());
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(0.0, f64::max);
    assert!(lo > 0.0 && hi / lo <= 3.0, "ratios {all:?}");
}

#[test]
fn schrodinger_gap_ratio_is_stable_under_refinement() {
    let domain = square();
    let gamma1 = ConductivityField::collar(1.0, vec![Bump::new(Point::new(0.5, 0.5), 0.3, 0.5)], &domain).unwrap();
    let gamma2 = unit();
    let mut ratios = Vec::new();
    for h in [0.1, 0.05, 0.025] {
        let mesh = triangulate(&domain, h).unwrap();
        let gram = assemble_trace_gram(&mesh).unwrap();
        let gap = schrodinger_dtn_gap(&mesh, &gram, &gamma1, &gamma2).unwrap();
        assert!(gap.lhs <= gap.rhs, "{gap:?}");
        ratios.push(gap.ratio);
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    assert!(lo > 0.0 && hi / lo <= 2.0, "ratios {ratios:?}");
}
